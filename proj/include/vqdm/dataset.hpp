#pragma once

// Image I/O for the command line: IDX image containers in, binary PGM
// grids out, plus rectangular occlusion masks.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vqdm/tensor.hpp"
#include "vqdm/vq.hpp"

namespace vqdm {

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<std::uint8_t>> images;
};

IdxImages read_idx_images(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);

enum class Preprocess {
  // (v + u) / 256 with u ~ U[0, 1): dequantized density evaluation.
  jitter,
  // v / 255: deterministic, matches the categorical level mapping.
  scale,
};

// Converts raw 8-bit images to [d, h, w] tensors in [0, 1]. Jitter noise
// comes from a generator seeded with `seed` and consumed in image order.
std::vector<Tensor> preprocess_images(const IdxImages& raw, const Shape& image_shape,
                                      Preprocess mode, std::uint64_t seed);

// Occlusion spec: "none", "top", "bottom", "left", "right", or
// "rect:r0,c0,r1,c1" (half-open rows/cols), combined with '+'. Named regions
// are unobserved; everything else is observed. Applied to every channel.
EvidenceMask parse_mask_spec(const std::string& spec, const Shape& image_shape);

// 8-bit value for an engine pixel: round-half-up of v * 255, clamped.
std::uint8_t to_byte(double v);

// Tiles [d, h, w] images (first channel) into a binary PGM grid.
std::string encode_pgm_grid(const std::vector<Tensor>& images, std::size_t columns);
void write_pgm_grid(const std::filesystem::path& path, const std::vector<Tensor>& images,
                    std::size_t columns);

}  // namespace vqdm
