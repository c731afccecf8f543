#pragma once

// Portable model file produced by a trainer and consumed by the engine.
//
// Layout (all integers little-endian):
//   8 bytes   magic "VQDMBNDL"
//   u32       format_version
//   u64       metadata length in bytes
//   ...       UTF-8 JSON metadata (architecture, shapes, blob table)
//   ...       blobs, raw little-endian float32, in sorted-name order
//
// docs/bundle_format.md has the full field reference.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vqdm/tensor.hpp"

namespace vqdm {

inline constexpr std::uint32_t kBundleFormatVersion = 1;

enum class LayerKind {
  conv,
  conv_transpose,
  batchnorm,
  relu,
  sigmoid,
  residual_block,
  masked_conv_A,
  masked_conv_B,
  softmax_head,
  gaussian_head,
  class_embedding,
};

const char* layer_kind_name(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // Blob prefix; parameter-free kinds leave it empty.
  std::string name;
  // conv, conv_transpose, masked_conv_A, masked_conv_B.
  ConvSpec conv;
  // batchnorm / residual_block / class_embedding channel count;
  // softmax_head group width (256 for pixels, K for the prior).
  std::size_t channels = 0;
  // residual_block inner width.
  std::size_t hidden = 0;
  double eps = 1e-5;

  bool operator==(const LayerSpec&) const = default;
};

// Blob names and shapes a layer reads. Residual blocks compute
// x + conv1x1(relu(conv3x3(relu(x)))).
std::vector<std::pair<std::string, Shape>> required_blobs(const LayerSpec& layer,
                                                          std::size_t num_classes);

enum class PixelModel { gaussian, categorical };

inline constexpr std::size_t kCategoricalLevels = 256;

const char* pixel_model_name(PixelModel model);

struct ModelBundle {
  std::uint32_t format_version = kBundleFormatVersion;
  PixelModel pixel_model = PixelModel::gaussian;
  // (d, h, w)
  Shape image_shape;
  // (H, W)
  Shape latent_shape;
  std::size_t num_classes = 1;
  std::vector<double> class_prior;
  std::vector<LayerSpec> encoder;
  std::vector<LayerSpec> decoder;
  std::vector<LayerSpec> prior;
  // Named weights; "codebook" is [K, D]. Values are float32-representable.
  std::map<std::string, Tensor> tensors;

  const Tensor& blob(const std::string& name) const;
  const Tensor& codebook() const { return blob("codebook"); }
  std::size_t num_codes() const { return codebook().dim(0); }
  std::size_t code_dim() const { return codebook().dim(1); }
  std::size_t latent_cells() const { return latent_shape.at(0) * latent_shape.at(1); }
  std::size_t pixel_count() const { return shape_numel(image_shape); }

  bool operator==(const ModelBundle&) const = default;
};

// Checks every invariant; throws vqdm::Error with a code per failure class.
void validate_bundle(const ModelBundle& bundle);

// Output shape of a chain applied to `input`, with the head (if any) shown
// as the shape it consumes. Throws Errc::shape_chain on a break.
Shape infer_chain_shape(const std::vector<LayerSpec>& chain, const Shape& input,
                        std::string_view chain_name);

ModelBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);

// Byte image of a bundle, identical to what save_bundle writes.
std::string serialize_bundle(const ModelBundle& bundle);
ModelBundle parse_bundle(const std::string& bytes);

}  // namespace vqdm
