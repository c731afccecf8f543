#pragma once

// Quantization and decoding: images to latent codes and latent codes to
// per-pixel leaf distributions.

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "vqdm/bundle.hpp"
#include "vqdm/tensor.hpp"

namespace vqdm {

// H x W grid of codebook indices, raster order. Ordered lexicographically.
struct LatentCode {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> indices;

  std::size_t size() const noexcept { return indices.size(); }
  std::uint32_t operator[](std::size_t i) const { return indices[i]; }

  auto operator<=>(const LatentCode&) const = default;
  bool operator==(const LatentCode&) const = default;
};

LatentCode make_code(const ModelBundle& bundle, std::vector<std::uint32_t> indices);
// Throws unless the grid matches the bundle and every index is below K.
void check_code(const ModelBundle& bundle, const LatentCode& z);
std::string code_str(const LatentCode& z);

inline constexpr double kMinStd = 1e-3;
inline constexpr double kMaxStd = 1.0;

// Per-pixel leaf distributions for one latent code. Pixels are the flattened
// (d, h, w) image in row-major order.
struct LeafParams {
  PixelModel model = PixelModel::gaussian;
  // Gaussian: one entry per pixel, std in [kMinStd, kMaxStd].
  std::vector<double> mean;
  std::vector<double> std;
  // Categorical: pixels x 256 log-probabilities.
  std::vector<double> log_probs;

  std::size_t pixels() const noexcept {
    return model == PixelModel::gaussian ? mean.size() : log_probs.size() / kCategoricalLevels;
  }

  bool operator==(const LeafParams&) const = default;
};

// Observed flag per pixel; values come from the image the mask is used with.
struct EvidenceMask {
  std::vector<std::uint8_t> observed;

  static EvidenceMask all(std::size_t pixels) { return {std::vector<std::uint8_t>(pixels, 1)}; }
  static EvidenceMask none(std::size_t pixels) { return {std::vector<std::uint8_t>(pixels, 0)}; }

  std::size_t pixels() const noexcept { return observed.size(); }
  bool is_observed(std::size_t i) const { return observed[i] != 0; }
  std::size_t observed_count() const;
  EvidenceMask complement() const;

  bool operator==(const EvidenceMask&) const = default;
};

// Categorical pixels are stored as intensity / 255; this maps back to a level.
std::size_t categorical_level(double value);

Tensor encode(const ModelBundle& bundle, const Tensor& image);

// Nearest codeword per cell by Euclidean distance; ties go to the lowest index.
LatentCode quantize(const ModelBundle& bundle, const Tensor& pre_latent);

// Codebook rows laid out as the decoder input, [D, H, W].
Tensor embed_code(const ModelBundle& bundle, const LatentCode& z);

LeafParams decode_leaf_params(const ModelBundle& bundle, const LatentCode& z);

// Maps raw head activations to leaf parameters (sigmoid mean, clamped
// log-variance, or per-pixel log-softmax over 256 levels).
LeafParams leaf_params_from_head(PixelModel model, const Tensor& head_input);

// Sum of per-pixel log-densities over observed pixels only.
double leaf_logpdf(const LeafParams& params, const Tensor& x, const EvidenceMask& mask);

// Log-density of a single pixel under its leaf.
double pixel_logpdf(const LeafParams& params, std::size_t pixel, double value);

}  // namespace vqdm
