#pragma once

// Random-weight bundles for tests, benchmarks and smoke runs. Weights are
// drawn from N(0, weight_scale^2) and rounded to float32 so the result
// round-trips through the bundle file unchanged.

#include <cstdint>

#include "vqdm/bundle.hpp"

namespace vqdm {

struct SyntheticSpec {
  std::size_t num_codes = 4;
  std::size_t code_dim = 2;
  std::size_t latent_h = 2;
  std::size_t latent_w = 2;
  // (d, h, w); h/latent_h must equal w/latent_w.
  Shape image_shape{1, 4, 4};
  PixelModel pixel_model = PixelModel::gaussian;
  std::size_t num_classes = 1;
  std::size_t prior_hidden = 8;
  std::size_t prior_kernel = 3;
  // masked_conv_B layers between the mask-A input layer and the output layer.
  std::size_t prior_depth = 1;
  std::size_t decoder_hidden = 8;
  bool with_batchnorm = true;
  bool with_residual = true;
  double weight_scale = 0.5;
  std::uint64_t seed = 0;
};

ModelBundle make_synthetic_bundle(const SyntheticSpec& spec);

// Sets every prior weight and bias to zero, making p(z | c) uniform.
void zero_prior(ModelBundle& bundle);

}  // namespace vqdm
