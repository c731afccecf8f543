#include <doctest.h>

#include <cstring>
#include <fstream>
#include <functional>
#include <set>

#include "container.hpp"
#include "oracles.hpp"
#include "vqdm/bundle.hpp"
#include "vqdm/error.hpp"
#include "vqdm/synthetic.hpp"

using namespace vqdm;

namespace {

Errc error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no vqdm::Error raised");
  return Errc::invalid_argument;
}

std::string error_text(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  FAIL("no vqdm::Error raised");
  return {};
}

// Re-encodes `bytes` after letting `edit` change the metadata document.
std::string with_meta(const std::string& bytes, const std::function<void(nlohmann::json&)>& edit) {
  detail::Container c = detail::decode_container(bytes, "VQDMBNDL", kBundleFormatVersion);
  edit(c.meta);
  c.meta.erase("blobs");
  return detail::encode_container("VQDMBNDL", c.version, c.meta, c.blobs, detail::BlobType::f32);
}

SyntheticSpec rich_spec() {
  SyntheticSpec s;
  s.num_codes = 5;
  s.code_dim = 3;
  s.latent_h = 2;
  s.latent_w = 3;
  s.image_shape = {2, 4, 6};
  s.num_classes = 3;
  s.prior_depth = 2;
  s.seed = 99;
  return s;
}

}  // namespace

TEST_CASE("bundle round-trips bit for bit") {
  for (PixelModel pm : {PixelModel::gaussian, PixelModel::categorical}) {
    SyntheticSpec s = rich_spec();
    s.pixel_model = pm;
    ModelBundle b = make_synthetic_bundle(s);
    b.class_prior = {0.25, 0.5, 0.25};
    const std::string bytes = serialize_bundle(b);
    const ModelBundle back = parse_bundle(bytes);
    CHECK(back == b);
    CHECK(serialize_bundle(back) == bytes);
  }
}

TEST_CASE("save and load through a file; two saves give identical bytes") {
  oracle::TempDir dir("bundle");
  const ModelBundle b = make_synthetic_bundle(rich_spec());
  save_bundle(b, dir / "a.vqdm");
  save_bundle(b, dir / "b.vqdm");
  CHECK(detail::read_file(dir / "a.vqdm") == detail::read_file(dir / "b.vqdm"));
  CHECK(load_bundle(dir / "a.vqdm") == b);
}

TEST_CASE("container layout: magic, version, metadata length, little-endian float32 blobs") {
  const ModelBundle b = make_synthetic_bundle(SyntheticSpec{});
  const std::string bytes = serialize_bundle(b);
  REQUIRE(bytes.size() > 20);
  CHECK(bytes.substr(0, 8) == "VQDMBNDL");
  std::uint32_t version = 0;
  for (int i = 3; i >= 0; --i) version = (version << 8) | static_cast<unsigned char>(bytes[8 + i]);
  CHECK(version == kBundleFormatVersion);
  std::uint64_t meta_len = 0;
  for (int i = 7; i >= 0; --i) meta_len = (meta_len << 8) | static_cast<unsigned char>(bytes[12 + i]);
  const auto meta = nlohmann::json::parse(bytes.substr(20, meta_len));
  std::size_t payload = 0;
  std::vector<std::string> names;
  for (const auto& entry : meta.at("blobs")) {
    names.push_back(entry.at("name"));
    CHECK(entry.at("dtype") == "f32");
    payload += 4 * shape_numel(entry.at("shape").get<Shape>());
  }
  CHECK(std::is_sorted(names.begin(), names.end()));
  CHECK(bytes.size() == 20 + meta_len + payload);

  // First blob is "codebook"; its first value as little-endian float32.
  REQUIRE(names.front() == "codebook");
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i)
    bits = (bits << 8) | static_cast<unsigned char>(bytes[20 + meta_len + static_cast<std::size_t>(i)]);
  float first = 0.0f;
  std::memcpy(&first, &bits, 4);
  CHECK(static_cast<double>(first) == b.codebook()[0]);
}

TEST_CASE("bad magic") {
  std::string bytes = serialize_bundle(make_synthetic_bundle(SyntheticSpec{}));
  bytes[0] = 'X';
  CHECK(error_of([&] { parse_bundle(bytes); }) == Errc::bad_magic);
  CHECK(error_of([&] { parse_bundle("VQ"); }) == Errc::bad_magic);
}

TEST_CASE("version mismatch") {
  std::string bytes = serialize_bundle(make_synthetic_bundle(SyntheticSpec{}));
  bytes[8] = 2;
  CHECK(error_of([&] { parse_bundle(bytes); }) == Errc::version_mismatch);
}

TEST_CASE("truncated file reports unexpected end of file") {
  const std::string bytes = serialize_bundle(make_synthetic_bundle(SyntheticSpec{}));
  for (std::size_t cut : {std::size_t{10}, std::size_t{19}, std::size_t{40}, bytes.size() - 1}) {
    const std::string part = bytes.substr(0, cut);
    CHECK(error_of([&] { parse_bundle(part); }) == Errc::unexpected_eof);
    CHECK(error_text([&] { parse_bundle(part); }).find("unexpected end of file") !=
          std::string::npos);
  }
}

TEST_CASE("trailing bytes and malformed metadata") {
  const std::string bytes = serialize_bundle(make_synthetic_bundle(SyntheticSpec{}));
  CHECK(error_of([&] { parse_bundle(bytes + "x"); }) == Errc::malformed_metadata);
  std::string broken = bytes;
  broken[20] = '#';
  CHECK(error_of([&] { parse_bundle(broken); }) == Errc::malformed_metadata);
  const std::string no_prior = with_meta(bytes, [](nlohmann::json& m) { m.erase("prior"); });
  CHECK(error_of([&] { parse_bundle(no_prior); }) == Errc::malformed_metadata);
  const std::string bad_kind =
      with_meta(bytes, [](nlohmann::json& m) { m["prior"][0]["kind"] = "attention"; });
  CHECK(error_of([&] { parse_bundle(bad_kind); }) == Errc::malformed_metadata);
}

TEST_CASE("class_prior [0.6, 0.6] is rejected by name") {
  SyntheticSpec s;
  s.num_classes = 2;
  ModelBundle b = make_synthetic_bundle(s);
  const std::string bytes = serialize_bundle(b);
  const std::string bad =
      with_meta(bytes, [](nlohmann::json& m) { m["class_prior"] = {0.6, 0.6}; });
  CHECK(error_of([&] { parse_bundle(bad); }) == Errc::class_prior);
  CHECK(error_text([&] { parse_bundle(bad); }).find("class_prior") != std::string::npos);
  b.class_prior = {0.6, 0.6};
  CHECK(error_of([&] { serialize_bundle(b); }) == Errc::class_prior);
}

TEST_CASE("absent class_prior defaults to uniform") {
  SyntheticSpec s;
  s.num_classes = 4;
  const std::string bytes = serialize_bundle(make_synthetic_bundle(s));
  const ModelBundle b =
      parse_bundle(with_meta(bytes, [](nlohmann::json& m) { m.erase("class_prior"); }));
  CHECK(b.class_prior == std::vector<double>(4, 0.25));
}

TEST_CASE("shape-chain break") {
  const std::string bytes = serialize_bundle(make_synthetic_bundle(SyntheticSpec{}));
  const std::string bad = with_meta(bytes, [](nlohmann::json& m) { m["encoder"][0]["stride"] = 1; });
  CHECK(error_of([&] { parse_bundle(bad); }) == Errc::shape_chain);

  ModelBundle b = make_synthetic_bundle(SyntheticSpec{});
  b.latent_shape = {4, 4};
  CHECK(error_of([&] { validate_bundle(b); }) == Errc::shape_chain);
}

TEST_CASE("prior chain rules") {
  const ModelBundle base = make_synthetic_bundle(SyntheticSpec{});
  {
    ModelBundle b = base;
    b.prior[0].kind = LayerKind::masked_conv_B;
    b.prior[0].conv.mask_kind = MaskKind::B;
    CHECK(error_of([&] { validate_bundle(b); }) == Errc::shape_chain);
  }
  {
    ModelBundle b = base;
    b.prior.insert(b.prior.begin() + 1, LayerSpec{LayerKind::sigmoid});
    CHECK(error_of([&] { validate_bundle(b); }) == Errc::shape_chain);
  }
  {
    ModelBundle b = base;
    b.prior.pop_back();
    CHECK(error_of([&] { validate_bundle(b); }) == Errc::shape_chain);
  }
}

TEST_CASE("missing blob refuses to write") {
  oracle::TempDir dir("bundle_missing");
  ModelBundle b = make_synthetic_bundle(SyntheticSpec{});
  b.tensors.erase("prior.out.bias");
  CHECK(error_of([&] { save_bundle(b, dir / "x.vqdm"); }) == Errc::missing_blob);
  CHECK_FALSE(std::filesystem::exists(dir / "x.vqdm"));
}

TEST_CASE("blob with the wrong shape") {
  ModelBundle b = make_synthetic_bundle(SyntheticSpec{});
  b.tensors["dec.out.weight"] = Tensor({1, 1, 1, 1});
  CHECK(error_of([&] { validate_bundle(b); }) == Errc::blob_shape);
}

TEST_CASE("duplicate codebook rows") {
  ModelBundle b = make_synthetic_bundle(SyntheticSpec{});
  Tensor cb = b.codebook();
  for (std::size_t j = 0; j < cb.dim(1); ++j) cb.data()[cb.dim(1) + j] = cb[j];
  b.tensors["codebook"] = cb;
  CHECK(error_of([&] { validate_bundle(b); }) == Errc::duplicate_codeword);
}

TEST_CASE("values must be finite float32") {
  ModelBundle b = make_synthetic_bundle(SyntheticSpec{});
  b.tensors["enc.conv0.bias"].data()[0] = 0.1;
  CHECK(error_of([&] { validate_bundle(b); }) == Errc::invalid_argument);
  b.tensors["enc.conv0.bias"].data()[0] = INFINITY;
  CHECK(error_of([&] { validate_bundle(b); }) == Errc::invalid_argument);
}

TEST_CASE("missing file is an I/O error") {
  CHECK(error_of([] { load_bundle("/nonexistent/dir/none.vqdm"); }) == Errc::io_error);
  CHECK(exit_code_for(Errc::io_error) == 4);
  CHECK(exit_code_for(Errc::capacity_exceeded) == 3);
  CHECK(exit_code_for(Errc::class_prior) == 2);
}

TEST_CASE("every malformed-input class has its own error code") {
  const std::vector<Errc> codes{Errc::bad_magic,   Errc::version_mismatch, Errc::unexpected_eof,
                                Errc::malformed_metadata, Errc::missing_blob, Errc::blob_shape,
                                Errc::shape_chain, Errc::class_prior,      Errc::duplicate_codeword};
  std::set<std::string> names;
  for (Errc c : codes) names.insert(errc_name(c));
  CHECK(names.size() == codes.size());
}
