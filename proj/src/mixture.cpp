#include "vqdm/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "container.hpp"
#include "vqdm/error.hpp"
#include "vqdm/parallel.hpp"
#include "vqdm/prior.hpp"
#include "vqdm/rng.hpp"

namespace vqdm {

namespace {

constexpr std::string_view kMixtureMagic = "VQDMMIXT";
constexpr std::uint32_t kMixtureFormatVersion = 1;

void check_image(const DistilledMixture& m, const Tensor& x, const EvidenceMask& mask,
                 std::string_view op) {
  if (x.numel() != m.pixels() || mask.pixels() != m.pixels()) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": image has " +
                                          std::to_string(x.numel()) + " pixels and mask " +
                                          std::to_string(mask.pixels()) + ", mixture models " +
                                          std::to_string(m.pixels()));
  }
}

std::vector<double> softmax(std::vector<double> v) {
  const double norm = log_sum_exp(v);
  for (double& e : v) e = std::exp(e - norm);
  return v;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double leaf_mean(const LeafParams& p, std::size_t i) {
  if (p.model == PixelModel::gaussian) return p.mean[i];
  double acc = 0.0;
  for (std::size_t v = 0; v < kCategoricalLevels; ++v) {
    acc += std::exp(p.log_probs[i * kCategoricalLevels + v]) * static_cast<double>(v) / 255.0;
  }
  return acc;
}

double leaf_mode(const LeafParams& p, std::size_t i) {
  if (p.model == PixelModel::gaussian) return p.mean[i];
  return static_cast<double>(argmax({p.log_probs.data() + i * kCategoricalLevels,
                                     kCategoricalLevels})) /
         255.0;
}

double leaf_draw(const LeafParams& p, std::size_t i, Rng& rng) {
  if (p.model == PixelModel::gaussian) {
    return std::clamp(p.mean[i] + p.std[i] * rng.normal(), 0.0, 1.0);
  }
  return static_cast<double>(rng.categorical_log(
             {p.log_probs.data() + i * kCategoricalLevels, kCategoricalLevels})) /
         255.0;
}

void check_leaf(const LeafParams& p, PixelModel model, std::size_t pixels, std::size_t n) {
  const std::string where = "component " + std::to_string(n);
  if (p.model != model || p.pixels() != pixels) {
    throw Error(Errc::shape_mismatch, where + " does not match the mixture's pixel model/size");
  }
  if (model == PixelModel::gaussian) {
    if (p.std.size() != pixels) throw Error(Errc::shape_mismatch, where + ": std size");
    for (std::size_t i = 0; i < pixels; ++i) {
      if (!(p.std[i] >= kMinStd && p.std[i] <= kMaxStd) || !std::isfinite(p.mean[i])) {
        throw Error(Errc::invalid_argument, where + ": leaf std outside [1e-3, 1] at pixel " +
                                                std::to_string(i));
      }
    }
  } else {
    for (std::size_t i = 0; i < pixels; ++i) {
      const double norm =
          log_sum_exp({p.log_probs.data() + i * kCategoricalLevels, kCategoricalLevels});
      if (!(std::abs(norm) <= 1e-9)) {
        throw Error(Errc::invalid_argument,
                    where + ": categorical leaf does not sum to 1 at pixel " + std::to_string(i));
      }
    }
  }
}

}  // namespace

const char* weighting_name(Weighting w) { return w == Weighting::uniform ? "uniform" : "prior"; }

std::optional<Weighting> parse_weighting(std::string_view name) {
  if (name == "uniform") return Weighting::uniform;
  if (name == "prior") return Weighting::prior;
  return std::nullopt;
}

DistilledMixture::DistilledMixture(PixelModel model, Shape image_shape,
                                   std::vector<LeafParams> components,
                                   std::vector<double> log_weights,
                                   std::vector<ComponentInfo> provenance, std::string method,
                                   Weighting weighting)
    : model_(model),
      image_shape_(std::move(image_shape)),
      components_(std::move(components)),
      log_weights_(std::move(log_weights)),
      provenance_(std::move(provenance)),
      method_(std::move(method)),
      weighting_(weighting) {
  if (components_.empty()) throw Error(Errc::invalid_argument, "mixture needs a component");
  if (log_weights_.size() != components_.size()) {
    throw Error(Errc::shape_mismatch, "mixture has " + std::to_string(components_.size()) +
                                          " components but " +
                                          std::to_string(log_weights_.size()) + " weights");
  }
  if (!provenance_.empty() && provenance_.size() != components_.size()) {
    throw Error(Errc::shape_mismatch, "provenance list does not match component count");
  }
  const double total = log_sum_exp(log_weights_);
  if (!(std::abs(total) <= 1e-9)) {
    throw Error(Errc::invalid_argument, "mixture log-weights log-sum-exp to " +
                                            std::to_string(total) + ", expected 0");
  }
  const std::size_t S = pixels();
  for (std::size_t n = 0; n < components_.size(); ++n) check_leaf(components_[n], model_, S, n);

  if (model_ == PixelModel::gaussian) {
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    log_norm_.resize(components_.size());
    for (std::size_t n = 0; n < components_.size(); ++n) {
      log_norm_[n].resize(S);
      for (std::size_t i = 0; i < S; ++i) {
        log_norm_[n][i] = -half_log_2pi - std::log(components_[n].std[i]);
      }
    }
  }
}

bool DistilledMixture::operator==(const DistilledMixture& o) const {
  return model_ == o.model_ && image_shape_ == o.image_shape_ &&
         components_ == o.components_ && log_weights_ == o.log_weights_ &&
         provenance_ == o.provenance_ && method_ == o.method_ && weighting_ == o.weighting_;
}

double DistilledMixture::component_logpdf(std::size_t n, const Tensor& x,
                                          const EvidenceMask& mask) const {
  const LeafParams& p = components_[n];
  const std::size_t S = pixels();
  double total = 0.0;
  if (model_ == PixelModel::gaussian) {
    const double* mean = p.mean.data();
    const double* sd = p.std.data();
    const double* norm = log_norm_[n].data();
    for (std::size_t i = 0; i < S; ++i) {
      if (!mask.is_observed(i)) continue;
      const double u = (x[i] - mean[i]) / sd[i];
      total += norm[i] - 0.5 * u * u;
    }
  } else {
    for (std::size_t i = 0; i < S; ++i) {
      if (mask.is_observed(i)) {
        total += p.log_probs[i * kCategoricalLevels + categorical_level(x[i])];
      }
    }
  }
  return total;
}

DistilledMixture compile(const ModelBundle& bundle, std::vector<ScoredCode> codes,
                         Weighting weighting, std::string method, std::size_t threads) {
  if (codes.empty()) throw Error(Errc::invalid_argument, "compile: the code set is empty");
  std::sort(codes.begin(), codes.end(),
            [](const ScoredCode& a, const ScoredCode& b) { return a.code < b.code; });
  for (std::size_t i = 1; i < codes.size(); ++i) {
    if (codes[i].code == codes[i - 1].code) {
      throw Error(Errc::invalid_argument,
                  "compile: duplicate latent code " + code_str(codes[i].code));
    }
  }
  for (const auto& sc : codes) check_code(bundle, sc.code);

  const std::size_t N = codes.size();
  std::vector<LeafParams> leaves(N);
  std::vector<double> log_marginal(N);
  parallel_for(N, threads, [&](std::size_t n) {
    leaves[n] = decode_leaf_params(bundle, codes[n].code);
    log_marginal[n] = marginal_logprob(bundle, codes[n].code);
  });

  std::vector<double> log_weights(N);
  if (weighting == Weighting::uniform) {
    std::fill(log_weights.begin(), log_weights.end(), -std::log(static_cast<double>(N)));
  } else {
    const double norm = log_sum_exp(log_marginal);
    if (!std::isfinite(norm)) {
      throw Error(Errc::invalid_argument, "compile: the code set has zero prior mass");
    }
    for (std::size_t n = 0; n < N; ++n) log_weights[n] = log_marginal[n] - norm;
  }

  std::vector<ComponentInfo> provenance(N);
  for (std::size_t n = 0; n < N; ++n) {
    provenance[n] = ComponentInfo{std::move(codes[n].code), codes[n].class_id, log_marginal[n]};
  }
  return DistilledMixture(bundle.pixel_model, bundle.image_shape, std::move(leaves),
                          std::move(log_weights), std::move(provenance), std::move(method),
                          weighting);
}

std::vector<double> joint_logpdfs(const DistilledMixture& m, const Tensor& x,
                                  const EvidenceMask& mask) {
  check_image(m, x, mask, "logpdf");
  std::vector<double> out(m.size());
  for (std::size_t n = 0; n < m.size(); ++n) {
    out[n] = m.log_weights()[n] + m.component_logpdf(n, x, mask);
  }
  return out;
}

double logpdf(const DistilledMixture& m, const Tensor& x, const EvidenceMask& mask) {
  return log_sum_exp(joint_logpdfs(m, x, mask));
}

std::vector<double> posterior_over_components(const DistilledMixture& m, const Tensor& x,
                                              const EvidenceMask& mask) {
  return softmax(joint_logpdfs(m, x, mask));
}

double conditional_logpdf(const DistilledMixture& m, const Tensor& x,
                          const EvidenceMask& observed, const EvidenceMask& query) {
  check_image(m, x, observed, "conditional_logpdf");
  check_image(m, x, query, "conditional_logpdf");
  for (std::size_t i = 0; i < m.pixels(); ++i) {
    if (observed.is_observed(i) && query.is_observed(i)) {
      throw Error(Errc::invalid_argument, "conditional_logpdf: masks overlap at pixel " +
                                              std::to_string(i));
    }
  }
  const auto post = joint_logpdfs(m, x, observed);
  const double evidence = log_sum_exp(post);
  std::vector<double> terms(m.size());
  for (std::size_t n = 0; n < m.size(); ++n) {
    terms[n] = (post[n] - evidence) + m.component_logpdf(n, x, query);
  }
  return log_sum_exp(terms);
}

double bpd_offset(PixelModel model) { return model == PixelModel::gaussian ? 8.0 : 0.0; }

double bpd_from_logliks(std::span<const double> logliks, std::size_t pixels, double offset) {
  if (logliks.empty()) throw Error(Errc::invalid_argument, "bpd: empty dataset");
  if (pixels == 0) throw Error(Errc::invalid_argument, "bpd: zero pixels per image");
  const double S = static_cast<double>(pixels);
  double total = 0.0;
  for (double ll : logliks) total += -(ll / std::numbers::ln2) / S + offset;
  return total / static_cast<double>(logliks.size());
}

double bpd(const DistilledMixture& m, const std::vector<Tensor>& dataset, std::size_t threads) {
  if (dataset.empty()) throw Error(Errc::invalid_argument, "bpd: empty dataset");
  std::vector<double> ll(dataset.size());
  const EvidenceMask full = EvidenceMask::all(m.pixels());
  parallel_for(dataset.size(), threads,
               [&](std::size_t t) { ll[t] = logpdf(m, dataset[t], full); });
  return bpd_from_logliks(ll, m.pixels(), bpd_offset(m.model()));
}

Tensor inpaint(const DistilledMixture& m, const Tensor& x_obs, const EvidenceMask& mask,
               InpaintMode mode, std::uint64_t seed) {
  check_image(m, x_obs, mask, "inpaint");
  Tensor out(x_obs);
  if (mask.observed_count() == mask.pixels()) return out;
  const auto post = posterior_over_components(m, x_obs, mask);
  const std::size_t S = m.pixels();
  if (mode == InpaintMode::mean) {
    for (std::size_t i = 0; i < S; ++i) {
      if (mask.is_observed(i)) continue;
      double acc = 0.0;
      for (std::size_t n = 0; n < m.size(); ++n) {
        if (post[n] != 0.0) acc += post[n] * leaf_mean(m.components()[n], i);
      }
      out[i] = acc;
    }
  } else {
    Rng rng(seed);
    const LeafParams& leaf = m.components()[rng.categorical(post)];
    for (std::size_t i = 0; i < S; ++i) {
      if (!mask.is_observed(i)) out[i] = leaf_draw(leaf, i, rng);
    }
  }
  return out;
}

Tensor map_complete(const DistilledMixture& m, const Tensor& x_obs, const EvidenceMask& mask) {
  check_image(m, x_obs, mask, "map_complete");
  Tensor out(x_obs);
  const auto joint = joint_logpdfs(m, x_obs, mask);
  const LeafParams& leaf = m.components()[argmax(joint)];
  for (std::size_t i = 0; i < m.pixels(); ++i) {
    if (!mask.is_observed(i)) out[i] = leaf_mode(leaf, i);
  }
  return out;
}

namespace {

MixtureSample draw_one(const DistilledMixture& m, std::span<const double> weights, Rng& rng) {
  MixtureSample s{Tensor(m.image_shape()), rng.categorical(weights)};
  const LeafParams& leaf = m.components()[s.component];
  for (std::size_t i = 0; i < m.pixels(); ++i) s.image[i] = leaf_draw(leaf, i, rng);
  return s;
}

std::vector<double> sampling_weights(const DistilledMixture& m,
                                     std::optional<std::size_t> class_filter) {
  std::vector<double> w(m.size());
  bool any = false;
  for (std::size_t n = 0; n < m.size(); ++n) {
    const bool keep = !class_filter || (n < m.provenance().size() &&
                                        m.provenance()[n].class_id == class_filter);
    w[n] = keep ? std::exp(m.log_weights()[n]) : 0.0;
    any = any || (keep && w[n] > 0.0);
  }
  if (!any) {
    throw Error(Errc::invalid_argument,
                "sample: no component matches class " + std::to_string(*class_filter));
  }
  return w;
}

}  // namespace

MixtureSample sample(const DistilledMixture& m, std::uint64_t seed,
                     std::optional<std::size_t> class_filter) {
  Rng rng(seed);
  return draw_one(m, sampling_weights(m, class_filter), rng);
}

std::vector<MixtureSample> sample_many(const DistilledMixture& m, std::size_t count,
                                       std::uint64_t seed,
                                       std::optional<std::size_t> class_filter) {
  const auto w = sampling_weights(m, class_filter);
  Rng rng(seed);
  std::vector<MixtureSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(draw_one(m, w, rng));
  return out;
}

std::string serialize_mixture(const DistilledMixture& m) {
  const std::size_t N = m.size(), S = m.pixels();
  nlohmann::json codes = nlohmann::json::array();
  nlohmann::json classes = nlohmann::json::array();
  nlohmann::json latent_shape = nlohmann::json::array();
  std::map<std::string, Tensor> blobs;
  Tensor log_marginal({m.provenance().size()});
  for (std::size_t n = 0; n < m.provenance().size(); ++n) {
    const auto& p = m.provenance()[n];
    codes.push_back(p.code.indices);
    classes.push_back(p.class_id ? nlohmann::json(*p.class_id) : nlohmann::json(nullptr));
    log_marginal[n] = p.log_marginal;
    if (n == 0) latent_shape = {p.code.height, p.code.width};
  }
  nlohmann::json meta{
      {"format", "vqdm-mixture"},
      {"pixel_model", pixel_model_name(m.model())},
      {"image_shape", m.image_shape()},
      {"num_components", N},
      {"method", m.method()},
      {"weighting", weighting_name(m.weighting())},
      {"latent_shape", latent_shape},
      {"codes", codes},
      {"classes", classes},
  };
  blobs.emplace("log_weights", Tensor({N}, m.log_weights()));
  if (!m.provenance().empty()) blobs.emplace("log_marginal", std::move(log_marginal));
  if (m.model() == PixelModel::gaussian) {
    Tensor mean({N, S}), sd({N, S});
    for (std::size_t n = 0; n < N; ++n) {
      std::copy(m.components()[n].mean.begin(), m.components()[n].mean.end(),
                mean.storage().begin() + static_cast<std::ptrdiff_t>(n * S));
      std::copy(m.components()[n].std.begin(), m.components()[n].std.end(),
                sd.storage().begin() + static_cast<std::ptrdiff_t>(n * S));
    }
    blobs.emplace("mean", std::move(mean));
    blobs.emplace("std", std::move(sd));
  } else {
    Tensor lp({N, S, kCategoricalLevels});
    for (std::size_t n = 0; n < N; ++n) {
      std::copy(m.components()[n].log_probs.begin(), m.components()[n].log_probs.end(),
                lp.storage().begin() + static_cast<std::ptrdiff_t>(n * S * kCategoricalLevels));
    }
    blobs.emplace("log_probs", std::move(lp));
  }
  return detail::encode_container(kMixtureMagic, kMixtureFormatVersion, std::move(meta), blobs,
                                  detail::BlobType::f64);
}

DistilledMixture parse_mixture(const std::string& bytes) {
  detail::Container c = detail::decode_container(bytes, kMixtureMagic, kMixtureFormatVersion);
  try {
    const auto& meta = c.meta;
    const auto pm = meta.at("pixel_model").get<std::string>();
    const PixelModel model = pm == "categorical" ? PixelModel::categorical : PixelModel::gaussian;
    const auto image_shape = meta.at("image_shape").get<Shape>();
    const auto N = meta.at("num_components").get<std::size_t>();
    const auto weighting = parse_weighting(meta.at("weighting").get<std::string>());
    if (!weighting) throw Error(Errc::malformed_metadata, "unknown weighting in mixture");
    const std::size_t S = shape_numel(image_shape);

    const auto blob = [&](const std::string& name, const Shape& shape) -> const Tensor& {
      const auto it = c.blobs.find(name);
      if (it == c.blobs.end()) throw Error(Errc::missing_blob, "mixture blob '" + name + "'");
      if (it->second.shape() != shape) {
        throw Error(Errc::blob_shape, "mixture blob '" + name + "' has shape " +
                                          shape_str(it->second.shape()));
      }
      return it->second;
    };

    std::vector<LeafParams> leaves(N);
    if (model == PixelModel::gaussian) {
      const Tensor& mean = blob("mean", {N, S});
      const Tensor& sd = blob("std", {N, S});
      for (std::size_t n = 0; n < N; ++n) {
        leaves[n].model = model;
        leaves[n].mean.assign(mean.data().begin() + static_cast<std::ptrdiff_t>(n * S),
                              mean.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * S));
        leaves[n].std.assign(sd.data().begin() + static_cast<std::ptrdiff_t>(n * S),
                             sd.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * S));
      }
    } else {
      const Tensor& lp = blob("log_probs", {N, S, kCategoricalLevels});
      const std::size_t stride = S * kCategoricalLevels;
      for (std::size_t n = 0; n < N; ++n) {
        leaves[n].model = model;
        leaves[n].log_probs.assign(
            lp.data().begin() + static_cast<std::ptrdiff_t>(n * stride),
            lp.data().begin() + static_cast<std::ptrdiff_t>((n + 1) * stride));
      }
    }
    const Tensor& lw = blob("log_weights", {N});

    std::vector<ComponentInfo> provenance;
    const auto& codes = meta.at("codes");
    if (!codes.empty()) {
      const auto ls = meta.at("latent_shape").get<Shape>();
      const Tensor& lm = blob("log_marginal", {N});
      const auto& classes = meta.at("classes");
      if (codes.size() != N || classes.size() != N || ls.size() != 2) {
        throw Error(Errc::malformed_metadata, "mixture provenance does not match components");
      }
      for (std::size_t n = 0; n < N; ++n) {
        ComponentInfo info;
        info.code = LatentCode{ls[0], ls[1], codes[n].get<std::vector<std::uint32_t>>()};
        if (info.code.indices.size() != ls[0] * ls[1]) {
          throw Error(Errc::malformed_metadata, "mixture code length mismatch");
        }
        if (!classes[n].is_null()) info.class_id = classes[n].get<std::size_t>();
        info.log_marginal = lm[n];
        provenance.push_back(std::move(info));
      }
    }
    return DistilledMixture(model, image_shape, std::move(leaves), lw.storage(),
                            std::move(provenance), meta.at("method").get<std::string>(),
                            *weighting);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_metadata, std::string("mixture metadata: ") + e.what());
  }
}

void save_mixture(const DistilledMixture& m, const std::filesystem::path& path) {
  detail::write_file(path, serialize_mixture(m));
}

DistilledMixture load_mixture(const std::filesystem::path& path) {
  return parse_mixture(detail::read_file(path));
}

}  // namespace vqdm
