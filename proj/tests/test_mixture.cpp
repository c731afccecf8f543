#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "container.hpp"
#include "oracles.hpp"
#include "vqdm/error.hpp"
#include "vqdm/mixture.hpp"
#include "vqdm/prior.hpp"

using namespace vqdm;

namespace {

LeafParams gauss(std::vector<double> mean, std::vector<double> sd) {
  LeafParams p;
  p.model = PixelModel::gaussian;
  p.mean = std::move(mean);
  p.std = std::move(sd);
  return p;
}

DistilledMixture random_gaussian_mixture(std::mt19937_64& gen, std::size_t comps, std::size_t S) {
  std::uniform_real_distribution<double> mean(0.3, 0.7), sd(0.05, 0.2), w(0.1, 1.0);
  std::vector<LeafParams> leaves;
  std::vector<double> weights;
  for (std::size_t n = 0; n < comps; ++n) {
    std::vector<double> mu(S), s(S);
    for (std::size_t i = 0; i < S; ++i) mu[i] = mean(gen), s[i] = sd(gen);
    leaves.push_back(gauss(mu, s));
    weights.push_back(w(gen));
  }
  double total = 0.0;
  for (double v : weights) total += v;
  for (double& v : weights) v = std::log(v / total);
  return DistilledMixture(PixelModel::gaussian, {1, 1, S}, leaves, weights);
}

// Direct evaluation of sum_n w_n prod_i N(x_i; mu_ni, s_ni) over observed pixels.
double direct_logpdf(const DistilledMixture& m, const Tensor& x, const EvidenceMask& mask) {
  std::vector<double> terms;
  for (std::size_t n = 0; n < m.size(); ++n) {
    double t = m.log_weights()[n];
    for (std::size_t i = 0; i < m.pixels(); ++i)
      if (mask.observed[i]) t += oracle::normal_logpdf(x[i], m.components()[n].mean[i], m.components()[n].std[i]);
    terms.push_back(t);
  }
  return oracle::lse(terms);
}

EvidenceMask random_mask(std::mt19937_64& gen, std::size_t S) {
  EvidenceMask m{std::vector<std::uint8_t>(S)};
  for (auto& v : m.observed) v = static_cast<std::uint8_t>(gen() & 1u);
  return m;
}

}  // namespace

TEST_CASE("gaussian mixtures integrate to one under 400x400 quadrature") {
  std::mt19937_64 gen(61);
  const std::size_t n = 400;
  const double lo = -0.5, hi = 1.5, h = (hi - lo) / n;
  for (int trial = 0; trial < 3; ++trial) {
    const DistilledMixture m = random_gaussian_mixture(gen, 3, 2);
    const EvidenceMask full = EvidenceMask::all(2);
    double total = 0.0, first = 0.0;
    Tensor x({1, 1, 2});
    for (std::size_t a = 0; a < n; ++a) {
      x.data()[0] = lo + (a + 0.5) * h;
      for (std::size_t b = 0; b < n; ++b) {
        x.data()[1] = lo + (b + 0.5) * h;
        total += std::exp(logpdf(m, x, full)) * h * h;
      }
      first += std::exp(logpdf(m, x, EvidenceMask{{1, 0}})) * h;
    }
    CHECK(std::abs(total - 1.0) < 1e-3);
    CHECK(std::abs(first - 1.0) < 1e-3);
  }
}

TEST_CASE("logpdf equals the direct weighted sum, marginals drop pixels") {
  std::mt19937_64 gen(62);
  for (int trial = 0; trial < 20; ++trial) {
    const DistilledMixture m = random_gaussian_mixture(gen, 4, 5);
    const Tensor x = oracle::random_tensor({1, 1, 5}, gen, 0.0, 1.0);
    const EvidenceMask mask = random_mask(gen, 5);
    CHECK(logpdf(m, x, mask) == doctest::Approx(direct_logpdf(m, x, mask)).epsilon(1e-12));
  }
  const DistilledMixture m = random_gaussian_mixture(gen, 2, 3);
  CHECK(logpdf(m, Tensor({1, 1, 3}), EvidenceMask::none(3)) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("two-component posterior matches Bayes' rule") {
  const DistilledMixture m(PixelModel::gaussian, {1, 1, 1},
                           {gauss({0.2}, {0.1}), gauss({0.6}, {0.3})},
                           {std::log(0.3), std::log(0.7)});
  const Tensor x({1, 1, 1}, {0.35});
  const double a = 0.3 * std::exp(oracle::normal_logpdf(0.35, 0.2, 0.1));
  const double b = 0.7 * std::exp(oracle::normal_logpdf(0.35, 0.6, 0.3));
  const auto post = posterior_over_components(m, x, EvidenceMask::all(1));
  CHECK(post[0] == doctest::Approx(a / (a + b)).epsilon(1e-12));
  CHECK(post[1] == doctest::Approx(b / (a + b)).epsilon(1e-12));
  const auto prior = posterior_over_components(m, x, EvidenceMask::none(1));
  CHECK(prior[0] == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("chain rule: full = observed + conditional") {
  std::mt19937_64 gen(63);
  for (int trial = 0; trial < 50; ++trial) {
    const DistilledMixture m = random_gaussian_mixture(gen, 3, 4);
    const Tensor x = oracle::random_tensor({1, 1, 4}, gen, 0.0, 1.0);
    const EvidenceMask obs = random_mask(gen, 4);
    const double full = logpdf(m, x, EvidenceMask::all(4));
    CHECK(std::abs(full - (logpdf(m, x, obs) + conditional_logpdf(m, x, obs, obs.complement()))) <= 1e-9);
  }
  const DistilledMixture m = random_gaussian_mixture(gen, 2, 2);
  CHECK_THROWS_AS(conditional_logpdf(m, Tensor({1, 1, 2}), EvidenceMask{{1, 0}}, EvidenceMask{{1, 1}}), Error);
}

TEST_CASE("exact model: prior-weighted enumeration equals sum_z p(z) p(x|z)") {
  const ModelBundle b = oracle::tiny_bundle(3, 1, 2, 64, 2);
  const DistilledMixture m = compile(b, enumerate_all(b), Weighting::prior, "exhaustive");
  std::mt19937_64 gen(65);
  for (int t = 0; t < 10; ++t) {
    const Tensor x = oracle::random_tensor(b.image_shape, gen, 0.0, 1.0);
    std::vector<double> terms;
    for (const auto& idx : oracle::all_codes(3, 2)) {
      const LatentCode z = make_code(b, idx);
      const LeafParams p = decode_leaf_params(b, z);
      double t2 = std::log(0.5 * std::exp(chain_logprob(b, z, 0)) + 0.5 * std::exp(chain_logprob(b, z, 1)));
      for (std::size_t i = 0; i < p.mean.size(); ++i) t2 += oracle::normal_logpdf(x[i], p.mean[i], p.std[i]);
      terms.push_back(t2);
    }
    CHECK(std::abs(logpdf(m, x, EvidenceMask::all(b.pixel_count())) - oracle::lse(terms)) <= 1e-10);
  }
}

TEST_CASE("uniform weighting and prior renormalization over a subset") {
  const ModelBundle b = oracle::tiny_bundle(3, 1, 2, 66);
  auto codes = enumerate_all(b);
  codes.resize(4);
  const DistilledMixture u = compile(b, codes, Weighting::uniform);
  for (double w : u.log_weights()) CHECK(w == doctest::Approx(-std::log(4.0)));
  const DistilledMixture p = compile(b, codes, Weighting::prior);
  std::vector<double> lm;
  for (const auto& c : codes) lm.push_back(c.log_marginal);
  const double z = oracle::lse(lm);
  for (std::size_t n = 0; n < 4; ++n) CHECK(p.log_weights()[n] == doctest::Approx(lm[n] - z).epsilon(1e-12));
}

TEST_CASE("compile is invariant to code order and rejects duplicates") {
  const ModelBundle b = oracle::tiny_bundle(3, 2, 2, 67);
  auto codes = enumerate_all(b);
  codes.resize(10);
  const DistilledMixture a = compile(b, codes, Weighting::prior);
  std::mt19937_64 gen(68);
  for (int t = 0; t < 3; ++t) {
    std::shuffle(codes.begin(), codes.end(), gen);
    CHECK(compile(b, codes, Weighting::prior) == a);
    CHECK(serialize_mixture(compile(b, codes, Weighting::prior, "manual", 3)) == serialize_mixture(a));
  }
  codes.push_back(codes.front());
  CHECK_THROWS_AS(compile(b, codes, Weighting::uniform), Error);
  CHECK_THROWS_AS(compile(b, {}, Weighting::uniform), Error);
}

TEST_CASE("components are bit-identical to the decoded leaves") {
  const ModelBundle b = oracle::tiny_bundle(3, 2, 2, 69);
  auto codes = enumerate_all(b);
  codes.resize(6);
  const DistilledMixture m = compile(b, codes, Weighting::uniform);
  std::mt19937_64 gen(70);
  const Tensor x = oracle::random_tensor(b.image_shape, gen, 0.0, 1.0);
  const EvidenceMask mask = random_mask(gen, b.pixel_count());
  for (std::size_t n = 0; n < m.size(); ++n) {
    const LeafParams leaf = decode_leaf_params(b, m.provenance()[n].code);
    CHECK(m.components()[n] == leaf);
    CHECK(m.component_logpdf(n, x, mask) == leaf_logpdf(leaf, x, mask));
  }
}

TEST_CASE("bpd: constant-density stub and std=1 at the mean") {
  const std::vector<double> zeros(7, 0.0);
  CHECK(bpd_from_logliks(zeros, 784, 8.0) == 8.0);
  const std::size_t S = 784;
  const std::vector<double> mean(S, 0.5);
  const DistilledMixture m(PixelModel::gaussian, {1, 28, 28}, {gauss(mean, std::vector<double>(S, 1.0))}, {0.0});
  const double want = 8.0 + std::log2(std::sqrt(2.0 * std::numbers::pi));
  CHECK(std::abs(bpd(m, {Tensor({1, 28, 28}, 0.5)}) - want) <= 1e-9);
  CHECK(bpd_offset(PixelModel::categorical) == 0.0);
}

TEST_CASE("categorical mixture: uniform leaves give 8 bits and exact normalization") {
  LeafParams uni;
  uni.model = PixelModel::categorical;
  uni.log_probs.assign(2 * 256, -std::log(256.0));
  const DistilledMixture m(PixelModel::categorical, {1, 1, 2}, {uni}, {0.0});
  CHECK(bpd(m, {Tensor({1, 1, 2}, 0.3)}) == doctest::Approx(8.0).epsilon(1e-14));

  const ModelBundle b = oracle::tiny_bundle(2, 1, 1, 71, 1, PixelModel::categorical, 1);
  const DistilledMixture c = compile(b, enumerate_all(b), Weighting::prior);
  std::vector<double> all;
  for (std::size_t v = 0; v < 256; ++v) all.push_back(logpdf(c, Tensor({1, 1, 1}, {v / 255.0}), EvidenceMask::all(1)));
  CHECK(std::exp(oracle::lse(all)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constructor rejects invalid mixtures") {
  CHECK_THROWS_AS(DistilledMixture(PixelModel::gaussian, {1, 1, 1}, {gauss({0.5}, {0.5})}, {-0.1}), Error);
  CHECK_THROWS_AS(DistilledMixture(PixelModel::gaussian, {1, 1, 1}, {gauss({0.5}, {1e-4})}, {0.0}), Error);
  CHECK_THROWS_AS(DistilledMixture(PixelModel::gaussian, {1, 1, 2}, {gauss({0.5}, {0.5})}, {0.0}), Error);
  CHECK_THROWS_AS(DistilledMixture(PixelModel::gaussian, {1, 1, 1}, {}, {}), Error);
  LeafParams bad;
  bad.model = PixelModel::categorical;
  bad.log_probs.assign(256, -5.0);
  CHECK_THROWS_AS(DistilledMixture(PixelModel::categorical, {1, 1, 1}, {bad}, {0.0}), Error);
}

TEST_CASE("inpainting") {
  const DistilledMixture m(PixelModel::gaussian, {1, 1, 3},
                           {gauss({0.1, 0.2, 0.3}, {0.1, 0.1, 0.1}), gauss({0.8, 0.7, 0.9}, {0.2, 0.2, 0.2})},
                           {std::log(0.4), std::log(0.6)});
  const Tensor x({1, 1, 3}, {0.15, 0.0, 0.0});
  const EvidenceMask mask{{1, 0, 0}};
  const auto post = posterior_over_components(m, x, mask);

  const Tensor mean = inpaint(m, x, mask, InpaintMode::mean);
  CHECK(mean[0] == 0.15);
  CHECK(mean[1] == doctest::Approx(post[0] * 0.2 + post[1] * 0.7).epsilon(1e-14));
  CHECK(mean[2] == doctest::Approx(post[0] * 0.3 + post[1] * 0.9).epsilon(1e-14));

  const Tensor map = map_complete(m, x, mask);
  CHECK(map.storage() == std::vector<double>{0.15, 0.2, 0.3});

  const Tensor s1 = inpaint(m, x, mask, InpaintMode::sample, 3);
  CHECK(s1 == inpaint(m, x, mask, InpaintMode::sample, 3));
  CHECK(s1[0] == 0.15);
  for (double v : s1.data()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(inpaint(m, x, EvidenceMask::all(3)) == x);
}

TEST_CASE("categorical inpaint mean is the expected level") {
  LeafParams leaf;
  leaf.model = PixelModel::categorical;
  leaf.log_probs.assign(2 * 256, -INFINITY);
  leaf.log_probs[0 * 256 + 10] = 0.0;
  leaf.log_probs[1 * 256 + 100] = std::log(0.25);
  leaf.log_probs[1 * 256 + 200] = std::log(0.75);
  const DistilledMixture m(PixelModel::categorical, {1, 1, 2}, {leaf}, {0.0});
  const Tensor out = inpaint(m, Tensor({1, 1, 2}, {10.0 / 255.0, 0.0}), EvidenceMask{{1, 0}});
  CHECK(out[1] == doctest::Approx((0.25 * 100 + 0.75 * 200) / 255.0).epsilon(1e-14));
  CHECK(map_complete(m, Tensor({1, 1, 2}), EvidenceMask{{1, 0}})[1] == doctest::Approx(200.0 / 255.0));
}

TEST_CASE("sampling picks components by weight and respects class filters") {
  std::vector<ComponentInfo> prov(3);
  prov[0].class_id = 0;
  prov[1].class_id = 1;
  prov[2].class_id = 1;
  const DistilledMixture m(PixelModel::gaussian, {1, 1, 1},
                           {gauss({0.1}, {0.01}), gauss({0.5}, {0.01}), gauss({0.9}, {0.01})},
                           {std::log(0.2), std::log(0.3), std::log(0.5)}, prov);
  const std::size_t draws = 20000;
  std::vector<double> counts(3, 0.0);
  for (const auto& s : sample_many(m, draws, 72)) {
    counts[s.component] += 1.0;
    CHECK(std::abs(s.image[0] - m.components()[s.component].mean[0]) < 0.1);
  }
  const std::vector<double> w{0.2, 0.3, 0.5};
  double chi2 = 0.0;
  for (std::size_t n = 0; n < 3; ++n) chi2 += std::pow(counts[n] - draws * w[n], 2) / (draws * w[n]);
  CHECK(chi2 < 13.8);
  for (const auto& s : sample_many(m, 200, 73, 1)) CHECK(s.component != 0);
  CHECK_THROWS_AS(sample_many(m, 1, 73, 5), Error);
  CHECK(sample(m, 9).image == sample(m, 9).image);
}

TEST_CASE("sidecar round-trip and determinism") {
  oracle::TempDir dir("mix");
  for (PixelModel pm : {PixelModel::gaussian, PixelModel::categorical}) {
    const ModelBundle b = oracle::tiny_bundle(3, 1, 2, 74, 2, pm);
    SelectionConfig cfg;
    cfg.n = 4;
    cfg.class_set = {0, 1};
    const auto sel = select_codes(b, cfg);
    const DistilledMixture m = compile(b, sel.codes, Weighting::uniform, "beam_search");
    save_mixture(m, dir / "a.mix");
    save_mixture(m, dir / "b.mix");
    CHECK(detail::read_file(dir / "a.mix") == detail::read_file(dir / "b.mix"));
    const DistilledMixture back = load_mixture(dir / "a.mix");
    CHECK(back == m);
    CHECK(back.method() == "beam_search");
    CHECK(back.provenance() == m.provenance());
  }
  std::string bytes = detail::read_file(dir / "a.mix");
  CHECK(bytes.substr(0, 8) == "VQDMMIXT");
  bytes[1] = '?';
  CHECK_THROWS_AS(parse_mixture(bytes), Error);
  CHECK_THROWS_AS(parse_mixture(detail::read_file(dir / "a.mix").substr(0, 30)), Error);
}
