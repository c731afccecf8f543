#include "vqdm/synthetic.hpp"

#include <cmath>
#include <set>

#include "vqdm/error.hpp"
#include "vqdm/rng.hpp"

namespace vqdm {

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

class Builder {
 public:
  Builder(ModelBundle& b, Rng& rng, double scale) : b_(b), rng_(rng), scale_(scale) {}

  Tensor random(const Shape& shape, double scale) {
    Tensor t(shape);
    for (double& v : t.data()) v = f32(scale * rng_.normal());
    return t;
  }

  void add_blobs(const LayerSpec& layer) {
    for (const auto& [name, shape] : required_blobs(layer, b_.num_classes)) {
      Tensor t;
      if (name.ends_with(".running_var")) {
        t = Tensor(shape);
        for (double& v : t.data()) v = f32(0.5 + rng_.uniform());
      } else if (name.ends_with(".gamma")) {
        t = Tensor(shape);
        for (double& v : t.data()) v = f32(1.0 + 0.1 * rng_.normal());
      } else {
        t = random(shape, scale_);
      }
      b_.tensors[name] = std::move(t);
    }
  }

  LayerSpec conv(LayerKind kind, std::string name, std::size_t in, std::size_t out,
                 std::size_t kernel, std::size_t stride, std::size_t padding) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(name);
    l.conv = ConvSpec{in, out, kernel, kernel, stride, padding, kind == LayerKind::conv_transpose,
                      kind == LayerKind::masked_conv_A   ? MaskKind::A
                      : kind == LayerKind::masked_conv_B ? MaskKind::B
                                                         : MaskKind::none};
    add_blobs(l);
    return l;
  }

  LayerSpec simple(LayerKind kind, std::string name = {}, std::size_t channels = 0,
                   std::size_t hidden = 0) {
    LayerSpec l;
    l.kind = kind;
    l.name = std::move(name);
    l.channels = channels;
    l.hidden = hidden;
    if (!l.name.empty()) add_blobs(l);
    return l;
  }

 private:
  ModelBundle& b_;
  Rng& rng_;
  double scale_;
};

}  // namespace

ModelBundle make_synthetic_bundle(const SyntheticSpec& s) {
  if (s.image_shape.size() != 3 || s.latent_h == 0 || s.latent_w == 0 ||
      s.image_shape[1] % s.latent_h != 0 || s.image_shape[2] % s.latent_w != 0 ||
      s.image_shape[1] / s.latent_h != s.image_shape[2] / s.latent_w) {
    throw Error(Errc::invalid_argument,
                "synthetic bundle: image must be an integer square upscale of the latent grid");
  }
  if (s.prior_kernel % 2 == 0) {
    throw Error(Errc::invalid_argument, "synthetic bundle: prior kernel must be odd");
  }
  ModelBundle b;
  b.pixel_model = s.pixel_model;
  b.image_shape = s.image_shape;
  b.latent_shape = {s.latent_h, s.latent_w};
  b.num_classes = s.num_classes;
  b.class_prior.assign(s.num_classes, 1.0 / static_cast<double>(s.num_classes));

  Rng rng(s.seed);
  Builder build(b, rng, s.weight_scale);
  const std::size_t d = s.image_shape[0];
  const std::size_t factor = s.image_shape[1] / s.latent_h;
  const std::size_t D = s.code_dim, K = s.num_codes;

  // Distinct codebook rows.
  Tensor codebook({K, D});
  std::set<std::vector<double>> rows;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> row(D);
    do {
      for (double& v : row) v = f32(rng.normal());
    } while (!rows.insert(row).second);
    std::copy(row.begin(), row.end(), codebook.storage().begin() + static_cast<std::ptrdiff_t>(k * D));
  }
  b.tensors["codebook"] = std::move(codebook);

  b.encoder.push_back(build.conv(LayerKind::conv, "enc.conv0", d, D, factor, factor, 0));
  if (s.with_batchnorm) b.encoder.push_back(build.simple(LayerKind::batchnorm, "enc.bn0", D));
  if (s.with_residual) {
    b.encoder.push_back(build.simple(LayerKind::residual_block, "enc.res0", D, s.decoder_hidden));
  }

  if (s.with_residual) {
    b.decoder.push_back(build.simple(LayerKind::residual_block, "dec.res0", D, s.decoder_hidden));
  }
  b.decoder.push_back(build.conv(LayerKind::conv_transpose, "dec.up0", D, s.decoder_hidden,
                                 factor, factor, 0));
  if (s.with_batchnorm) {
    b.decoder.push_back(build.simple(LayerKind::batchnorm, "dec.bn0", s.decoder_hidden));
  }
  b.decoder.push_back(build.simple(LayerKind::relu));
  const std::size_t head_channels =
      s.pixel_model == PixelModel::gaussian ? 2 * d : kCategoricalLevels * d;
  b.decoder.push_back(
      build.conv(LayerKind::conv, "dec.out", s.decoder_hidden, head_channels, 1, 1, 0));
  if (s.pixel_model == PixelModel::gaussian) {
    b.decoder.push_back(build.simple(LayerKind::gaussian_head));
  } else {
    b.decoder.push_back(build.simple(LayerKind::softmax_head, {}, kCategoricalLevels));
  }

  const std::size_t pad = s.prior_kernel / 2, hid = s.prior_hidden;
  b.prior.push_back(
      build.conv(LayerKind::masked_conv_A, "prior.in", K, hid, s.prior_kernel, 1, pad));
  b.prior.push_back(build.simple(LayerKind::class_embedding, "prior.class", hid));
  b.prior.push_back(build.simple(LayerKind::relu));
  for (std::size_t i = 0; i < s.prior_depth; ++i) {
    b.prior.push_back(build.conv(LayerKind::masked_conv_B, "prior.mid" + std::to_string(i), hid,
                                 hid, s.prior_kernel, 1, pad));
    b.prior.push_back(build.simple(LayerKind::relu));
  }
  b.prior.push_back(build.conv(LayerKind::masked_conv_B, "prior.out", hid, K, 1, 1, 0));
  b.prior.push_back(build.simple(LayerKind::softmax_head, {}, K));

  validate_bundle(b);
  return b;
}

void zero_prior(ModelBundle& bundle) {
  for (const auto& layer : bundle.prior) {
    for (const auto& [name, shape] : required_blobs(layer, bundle.num_classes)) {
      for (double& v : bundle.tensors.at(name).data()) v = 0.0;
    }
  }
}

}  // namespace vqdm
