#include "vqdm/network.hpp"

#include "vqdm/error.hpp"

namespace vqdm {

namespace {

Tensor residual_block(const LayerSpec& l, const ModelBundle& b, const Tensor& x) {
  const ConvSpec inner{l.channels, l.hidden, 3, 3, 1, 1, false, MaskKind::none};
  const ConvSpec outer{l.hidden, l.channels, 1, 1, 1, 0, false, MaskKind::none};
  Tensor h = conv2d(relu(x), b.blob(l.name + ".conv1.weight"), b.blob(l.name + ".conv1.bias"),
                    inner);
  h = conv2d(relu(h), b.blob(l.name + ".conv2.weight"), b.blob(l.name + ".conv2.bias"), outer);
  for (std::size_t i = 0; i < h.numel(); ++i) h[i] += x[i];
  return h;
}

}  // namespace

Tensor apply_layer(const LayerSpec& l, const ModelBundle& b, const Tensor& x,
                   std::optional<std::size_t> class_id) {
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::masked_conv_A:
    case LayerKind::masked_conv_B:
      return conv2d(x, b.blob(l.name + ".weight"), b.blob(l.name + ".bias"), l.conv);
    case LayerKind::conv_transpose:
      return conv_transpose2d(x, b.blob(l.name + ".weight"), b.blob(l.name + ".bias"), l.conv);
    case LayerKind::batchnorm:
      return batchnorm_inference(x, b.blob(l.name + ".gamma"), b.blob(l.name + ".beta"),
                                 b.blob(l.name + ".running_mean"),
                                 b.blob(l.name + ".running_var"), l.eps);
    case LayerKind::relu:
      return relu(x);
    case LayerKind::sigmoid:
      return sigmoid(x);
    case LayerKind::residual_block:
      return residual_block(l, b, x);
    case LayerKind::class_embedding: {
      if (!class_id) {
        throw Error(Errc::invalid_argument, "class_embedding layer needs a class id");
      }
      if (*class_id >= b.num_classes) {
        throw Error(Errc::invalid_argument, "class id " + std::to_string(*class_id) +
                                                " out of range for " +
                                                std::to_string(b.num_classes) + " classes");
      }
      const Tensor emb = embedding_lookup(b.blob(l.name + ".table"), *class_id);
      Tensor out(x);
      const std::size_t plane = x.dim(1) * x.dim(2);
      for (std::size_t c = 0; c < x.dim(0); ++c) {
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += emb[c];
      }
      return out;
    }
    case LayerKind::softmax_head:
    case LayerKind::gaussian_head:
      return x;
  }
  return x;
}

Tensor run_chain(const std::vector<LayerSpec>& chain, const ModelBundle& b, Tensor x,
                 std::optional<std::size_t> class_id) {
  for (const LayerSpec& layer : chain) {
    if (layer.kind == LayerKind::softmax_head || layer.kind == LayerKind::gaussian_head) break;
    x = apply_layer(layer, b, x, class_id);
  }
  return x;
}

}  // namespace vqdm
