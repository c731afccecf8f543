#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "container.hpp"
#include "oracles.hpp"
#include "vqdm/cli.hpp"
#include "vqdm/dataset.hpp"
#include "vqdm/mixture.hpp"
#include "vqdm/parallel.hpp"

using namespace vqdm;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vqdm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string field(const std::string& report, const std::string& key) {
  std::istringstream is(report);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind(key + ",", 0) == 0) return line.substr(key.size() + 1);
  return {};
}

void write_images(const std::filesystem::path& path, std::size_t count, std::size_t side) {
  IdxImages imgs;
  imgs.rows = side;
  imgs.cols = side;
  for (std::size_t n = 0; n < count; ++n) {
    std::vector<std::uint8_t> px(side * side);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>((n * 37 + i * 11) % 256);
    imgs.images.push_back(px);
  }
  write_idx_images(path, imgs);
}

}  // namespace

TEST_CASE("synth, verify and a validation report") {
  oracle::TempDir dir("cli_verify");
  const std::string b = (dir / "b.vqdm").string();
  REQUIRE(cli({"synth", "--out", b, "--classes", "2", "--seed", "3"}).code == 0);
  const Run r = cli({"verify", "--bundle", b});
  CHECK(r.code == 0);
  CHECK(field(r.out, "status") == "ok");
  CHECK(field(r.out, "num_classes") == "2");
  CHECK(field(r.out, "latent_space_size") == "256");
  CHECK(r.err.find("\"command\":\"verify\"") != std::string::npos);
}

TEST_CASE("distill beam on a 2-class toy bundle") {
  oracle::TempDir dir("cli_beam");
  const std::string b = (dir / "b.vqdm").string(), m = (dir / "m.mix").string();
  REQUIRE(cli({"synth", "--out", b, "--classes", "2", "--seed", "4"}).code == 0);
  const Run r = cli({"distill", "--bundle", b, "--method", "beam", "--n", "16", "--s", "2", "--seed", "7", "--out", m});
  REQUIRE(r.code == 0);
  CHECK(field(r.out, "beam_width") == "4");
  CHECK(field(r.out, "extensions") == std::to_string(4 * 3 * 4 * 4));
  const DistilledMixture mix = load_mixture(m);
  CHECK(mix.size() <= 16);
  CHECK(mix.size() == std::stoul(field(r.out, "components")));
  CHECK(r.err.find("\"seed\":7") != std::string::npos);
  CHECK(cli({"distill", "--bundle", b, "--method", "beam", "--n", "15", "--s", "2", "--out", m}).code == 2);
}

TEST_CASE("distill is byte-for-byte reproducible") {
  oracle::TempDir dir("cli_repro");
  const std::string b = (dir / "b.vqdm").string();
  REQUIRE(cli({"synth", "--out", b, "--seed", "5"}).code == 0);
  for (const std::string method : {"beam", "random", "exhaustive"}) {
    const std::string m1 = (dir / "m1.mix").string(), m2 = (dir / "m2.mix").string();
    REQUIRE(cli({"distill", "--bundle", b, "--method", method, "--n", "8", "--seed", "11", "--out", m1}).code == 0);
    REQUIRE(cli({"distill", "--bundle", b, "--method", method, "--n", "8", "--seed", "11", "--out", m2, "--threads", "3"}).code == 0);
    CHECK(detail::read_file(m1) == detail::read_file(m2));
  }
}

TEST_CASE("exhaustive distill on K=96, HW=4 hits the cap") {
  oracle::TempDir dir("cli_cap");
  const std::string b = (dir / "b.vqdm").string();
  REQUIRE(cli({"synth", "--out", b, "--K", "96", "--prior-hidden", "2"}).code == 0);
  const Run r = cli({"distill", "--bundle", b, "--method", "exhaustive", "--out", (dir / "m.mix").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("capacity_exceeded") != std::string::npos);
  CHECK(r.err.find("beam search") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "m.mix"));
}

TEST_CASE("eval of a uniform-density stub gives 8 bits per dimension") {
  oracle::TempDir dir("cli_eval");
  LeafParams uni;
  uni.model = PixelModel::categorical;
  uni.log_probs.assign(16 * 256, -std::log(256.0));
  save_mixture(DistilledMixture(PixelModel::categorical, {1, 4, 4}, {uni}, {0.0}), dir / "stub.mix");
  write_images(dir / "x.idx", 5, 4);
  const Run r = cli({"eval", "--mixture", (dir / "stub.mix").string(), "--images", (dir / "x.idx").string()});
  REQUIRE(r.code == 0);
  CHECK(std::stod(field(r.out, "bpd")) == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(field(r.out, "images") == "5");

  const std::string rep = (dir / "rep.txt").string();
  REQUIRE(cli({"eval", "--mixture", (dir / "stub.mix").string(), "--images", (dir / "x.idx").string(), "--limit", "2", "--out", rep}).code == 0);
  CHECK(field(detail::read_file(rep), "images") == "2");
}

TEST_CASE("inpaint with an empty mask copies the input") {
  oracle::TempDir dir("cli_inpaint");
  const std::string b = (dir / "b.vqdm").string(), m = (dir / "m.mix").string();
  REQUIRE(cli({"synth", "--out", b, "--seed", "6"}).code == 0);
  REQUIRE(cli({"distill", "--bundle", b, "--method", "beam", "--n", "4", "--out", m}).code == 0);
  write_images(dir / "x.idx", 3, 4);
  const std::string out = (dir / "in.pgm").string();
  REQUIRE(cli({"inpaint", "--mixture", m, "--images", (dir / "x.idx").string(), "--preprocess", "scale", "--mask", "none", "--out", out, "--columns", "3"}).code == 0);

  const IdxImages raw = read_idx_images(dir / "x.idx");
  const auto data = preprocess_images(raw, {1, 4, 4}, Preprocess::scale, 0);
  CHECK(detail::read_file(out) == encode_pgm_grid(data, 3));

  for (const std::string mode : {"mean", "sample", "map"}) {
    const std::string p = (dir / ("o_" + mode + ".pgm")).string();
    const Run r = cli({"inpaint", "--mixture", m, "--images", (dir / "x.idx").string(), "--mask", "top+rect:2,0,3,1", "--mode", mode, "--out", p});
    CHECK(r.code == 0);
    CHECK(field(r.out, "unobserved_pixels") == "9");
  }
  const Run bad = cli({"inpaint", "--mixture", m, "--images", (dir / "x.idx").string(), "--mask", "diagonal", "--out", out});
  CHECK(bad.code == 2);
}

TEST_CASE("sample twice with a fixed seed gives identical files") {
  oracle::TempDir dir("cli_sample");
  const std::string b = (dir / "b.vqdm").string(), m = (dir / "m.mix").string();
  REQUIRE(cli({"synth", "--out", b, "--classes", "2", "--seed", "8"}).code == 0);
  REQUIRE(cli({"distill", "--bundle", b, "--method", "beam", "--n", "8", "--out", m}).code == 0);
  const std::string a = (dir / "a.pgm").string(), c = (dir / "c.pgm").string();
  REQUIRE(cli({"sample", "--mixture", m, "--count", "6", "--seed", "2", "--out", a}).code == 0);
  REQUIRE(cli({"sample", "--mixture", m, "--count", "6", "--seed", "2", "--out", c}).code == 0);
  CHECK(detail::read_file(a) == detail::read_file(c));
  CHECK(detail::read_file(a).rfind("P5\n", 0) == 0);
  CHECK(cli({"sample", "--mixture", m, "--count", "6", "--class", "1", "--out", c}).code == 0);
}

TEST_CASE("cdf and log-likelihood matrix reports") {
  oracle::TempDir dir("cli_cdf");
  const std::string b = (dir / "b.vqdm").string();
  REQUIRE(cli({"synth", "--out", b, "--uniform-prior"}).code == 0);
  const Run r = cli({"cdf", "--bundle", b});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("# idx_90,231\n") != std::string::npos);
  const Run s = cli({"cdf", "--bundle", b, "--mode", "sampled", "--draws", "50", "--seed", "1"});
  CHECK(s.code == 0);
  CHECK(s.out == cli({"cdf", "--bundle", b, "--mode", "sampled", "--draws", "50", "--seed", "1"}).out);

  const std::string m = (dir / "m.mix").string();
  REQUIRE(cli({"distill", "--bundle", b, "--method", "random", "--n", "3", "--out", m}).code == 0);
  write_images(dir / "x.idx", 2, 4);
  const Run mat = cli({"loglike-matrix", "--mixture", m, "--images", (dir / "x.idx").string()});
  REQUIRE(mat.code == 0);
  CHECK(mat.out.rfind("component,code,sample_0,sample_1\n", 0) == 0);
}

TEST_CASE("exit codes for I/O and usage errors") {
  oracle::TempDir dir("cli_err");
  CHECK(cli({"verify", "--bundle", (dir / "missing.vqdm").string()}).code == 4);
  detail::write_file(dir / "junk.vqdm", "not a bundle at all");
  const Run junk = cli({"verify", "--bundle", (dir / "junk.vqdm").string()});
  CHECK(junk.code == 2);
  CHECK(junk.err.find("bad_magic") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("thread count resolution") {
  CHECK(resolve_threads(3) == 3);
  setenv("VQDM_THREADS", "2", 1);
  CHECK(resolve_threads(0) == 2);
  CHECK(resolve_threads(5) == 5);
  unsetenv("VQDM_THREADS");
  CHECK(resolve_threads(0) >= 1);
}
