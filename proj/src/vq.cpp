#include "vqdm/vq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "vqdm/error.hpp"
#include "vqdm/network.hpp"

namespace vqdm {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
const double kMinLogVar = 2.0 * std::log(kMinStd);
const double kMaxLogVar = 2.0 * std::log(kMaxStd);

}  // namespace

std::size_t EvidenceMask::observed_count() const {
  return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), 1));
}

EvidenceMask EvidenceMask::complement() const {
  EvidenceMask out{observed};
  for (auto& v : out.observed) v = v ? 0 : 1;
  return out;
}

LatentCode make_code(const ModelBundle& bundle, std::vector<std::uint32_t> indices) {
  LatentCode z{bundle.latent_shape.at(0), bundle.latent_shape.at(1), std::move(indices)};
  check_code(bundle, z);
  return z;
}

void check_code(const ModelBundle& bundle, const LatentCode& z) {
  if (z.height != bundle.latent_shape.at(0) || z.width != bundle.latent_shape.at(1) ||
      z.indices.size() != z.height * z.width) {
    throw Error(Errc::shape_mismatch, "latent code grid " + std::to_string(z.height) + "x" +
                                          std::to_string(z.width) + " does not match bundle " +
                                          shape_str(bundle.latent_shape));
  }
  const std::size_t K = bundle.num_codes();
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z.indices[i] >= K) {
      throw Error(Errc::invalid_argument, "latent index " + std::to_string(z.indices[i]) +
                                              " at cell " + std::to_string(i) +
                                              " is not below K=" + std::to_string(K));
    }
  }
}

std::string code_str(const LatentCode& z) {
  std::ostringstream os;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i) os << ' ';
    os << z.indices[i];
  }
  return os.str();
}

std::size_t categorical_level(double value) {
  const double scaled = std::round(value * 255.0);
  return static_cast<std::size_t>(std::clamp(scaled, 0.0, 255.0));
}

Tensor encode(const ModelBundle& bundle, const Tensor& image) {
  if (image.shape() != bundle.image_shape) {
    throw Error(Errc::shape_mismatch, "encode: image shape " + shape_str(image.shape()) +
                                          " does not match bundle " +
                                          shape_str(bundle.image_shape));
  }
  return run_chain(bundle.encoder, bundle, image);
}

LatentCode quantize(const ModelBundle& bundle, const Tensor& pre_latent) {
  const Tensor& cb = bundle.codebook();
  const std::size_t K = cb.dim(0), D = cb.dim(1);
  const std::size_t H = bundle.latent_shape.at(0), W = bundle.latent_shape.at(1);
  if (pre_latent.shape() != Shape{D, H, W}) {
    throw Error(Errc::shape_mismatch, "quantize: pre-latent shape " +
                                          shape_str(pre_latent.shape()) + ", expected " +
                                          shape_str({D, H, W}));
  }
  LatentCode z{H, W, std::vector<std::uint32_t>(H * W, 0)};
  for (std::size_t cell = 0; cell < H * W; ++cell) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_k = 0;
    for (std::size_t k = 0; k < K; ++k) {
      double dist = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = pre_latent[d * H * W + cell] - cb[k * D + d];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_k = static_cast<std::uint32_t>(k);
      }
    }
    z.indices[cell] = best_k;
  }
  return z;
}

Tensor embed_code(const ModelBundle& bundle, const LatentCode& z) {
  check_code(bundle, z);
  const Tensor& cb = bundle.codebook();
  const std::size_t D = cb.dim(1), cells = z.size();
  Tensor out({D, z.height, z.width});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const Tensor e = embedding_lookup(cb, z.indices[cell]);
    for (std::size_t d = 0; d < D; ++d) out[d * cells + cell] = e[d];
  }
  return out;
}

LeafParams leaf_params_from_head(PixelModel model, const Tensor& head_input) {
  LeafParams p;
  p.model = model;
  const std::size_t plane = head_input.dim(1) * head_input.dim(2);
  if (model == PixelModel::gaussian) {
    const std::size_t d = head_input.dim(0) / 2;
    const std::size_t S = d * plane;
    p.mean.resize(S);
    p.std.resize(S);
    for (std::size_t i = 0; i < S; ++i) {
      p.mean[i] = sigmoid(head_input[i]);
      const double log_var = std::clamp(head_input[S + i], kMinLogVar, kMaxLogVar);
      p.std[i] = std::clamp(std::exp(0.5 * log_var), kMinStd, kMaxStd);
    }
  } else {
    const std::size_t d = head_input.dim(0) / kCategoricalLevels;
    p.log_probs.resize(d * plane * kCategoricalLevels);
    std::vector<double> logits(kCategoricalLevels);
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t pos = 0; pos < plane; ++pos) {
        for (std::size_t v = 0; v < kCategoricalLevels; ++v) {
          logits[v] = head_input[(c * kCategoricalLevels + v) * plane + pos];
        }
        const double norm = log_sum_exp(logits);
        double* dst = p.log_probs.data() + (c * plane + pos) * kCategoricalLevels;
        for (std::size_t v = 0; v < kCategoricalLevels; ++v) dst[v] = logits[v] - norm;
      }
    }
  }
  return p;
}

LeafParams decode_leaf_params(const ModelBundle& bundle, const LatentCode& z) {
  Tensor h = run_chain(bundle.decoder, bundle, embed_code(bundle, z));
  return leaf_params_from_head(bundle.pixel_model, h);
}

double pixel_logpdf(const LeafParams& params, std::size_t pixel, double value) {
  if (params.model == PixelModel::gaussian) {
    const double s = params.std[pixel];
    const double u = (value - params.mean[pixel]) / s;
    return -kHalfLog2Pi - std::log(s) - 0.5 * u * u;
  }
  return params.log_probs[pixel * kCategoricalLevels + categorical_level(value)];
}

double leaf_logpdf(const LeafParams& params, const Tensor& x, const EvidenceMask& mask) {
  const std::size_t S = params.pixels();
  if (x.numel() != S || mask.pixels() != S) {
    throw Error(Errc::shape_mismatch, "leaf_logpdf: image has " + std::to_string(x.numel()) +
                                          " pixels and mask " + std::to_string(mask.pixels()) +
                                          ", leaves cover " + std::to_string(S));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    if (mask.is_observed(i)) total += pixel_logpdf(params, i, x[i]);
  }
  return total;
}

}  // namespace vqdm
