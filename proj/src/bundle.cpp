#include "vqdm/bundle.hpp"

#include <array>
#include <cmath>

#include "container.hpp"
#include "vqdm/error.hpp"

namespace vqdm {

namespace {

constexpr std::string_view kBundleMagic = "VQDMBNDL";

constexpr std::array<std::pair<LayerKind, const char*>, 11> kKindNames{{
    {LayerKind::conv, "conv"},
    {LayerKind::conv_transpose, "conv_transpose"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::relu, "relu"},
    {LayerKind::sigmoid, "sigmoid"},
    {LayerKind::residual_block, "residual_block"},
    {LayerKind::masked_conv_A, "masked_conv_A"},
    {LayerKind::masked_conv_B, "masked_conv_B"},
    {LayerKind::softmax_head, "softmax_head"},
    {LayerKind::gaussian_head, "gaussian_head"},
    {LayerKind::class_embedding, "class_embedding"},
}};

bool is_conv_kind(LayerKind k) {
  return k == LayerKind::conv || k == LayerKind::conv_transpose ||
         k == LayerKind::masked_conv_A || k == LayerKind::masked_conv_B;
}

bool is_head(LayerKind k) {
  return k == LayerKind::softmax_head || k == LayerKind::gaussian_head;
}

[[noreturn]] void chain_error(std::string_view chain, std::size_t index, const LayerSpec& layer,
                              const std::string& what) {
  throw Error(Errc::shape_chain, std::string(chain) + " layer " + std::to_string(index) + " (" +
                                     layer_kind_name(layer.kind) +
                                     (layer.name.empty() ? "" : " '" + layer.name + "'") +
                                     "): " + what);
}

nlohmann::json layer_to_json(const LayerSpec& l) {
  nlohmann::json j{{"kind", layer_kind_name(l.kind)}};
  if (!l.name.empty()) j["name"] = l.name;
  if (is_conv_kind(l.kind)) {
    j["in_channels"] = l.conv.in_channels;
    j["out_channels"] = l.conv.out_channels;
    j["kernel_h"] = l.conv.kernel_h;
    j["kernel_w"] = l.conv.kernel_w;
    j["stride"] = l.conv.stride;
    j["padding"] = l.conv.padding;
  }
  switch (l.kind) {
    case LayerKind::batchnorm:
      j["channels"] = l.channels;
      j["eps"] = l.eps;
      break;
    case LayerKind::residual_block:
      j["channels"] = l.channels;
      j["hidden"] = l.hidden;
      break;
    case LayerKind::class_embedding:
    case LayerKind::softmax_head:
      j["channels"] = l.channels;
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec l;
  const auto kind_name = j.at("kind").get<std::string>();
  const auto kind = parse_layer_kind(kind_name);
  if (!kind) throw Error(Errc::malformed_metadata, "unknown layer kind '" + kind_name + "'");
  l.kind = *kind;
  l.name = j.value("name", std::string{});
  if (is_conv_kind(l.kind)) {
    l.conv.in_channels = j.at("in_channels").get<std::size_t>();
    l.conv.out_channels = j.at("out_channels").get<std::size_t>();
    l.conv.kernel_h = j.at("kernel_h").get<std::size_t>();
    l.conv.kernel_w = j.at("kernel_w").get<std::size_t>();
    l.conv.stride = j.at("stride").get<std::size_t>();
    l.conv.padding = j.at("padding").get<std::size_t>();
    l.conv.transposed = l.kind == LayerKind::conv_transpose;
    l.conv.mask_kind = l.kind == LayerKind::masked_conv_A   ? MaskKind::A
                       : l.kind == LayerKind::masked_conv_B ? MaskKind::B
                                                            : MaskKind::none;
  }
  l.channels = j.value("channels", std::size_t{0});
  l.hidden = j.value("hidden", std::size_t{0});
  l.eps = j.value("eps", 1e-5);
  return l;
}

nlohmann::json chain_to_json(const std::vector<LayerSpec>& chain) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : chain) arr.push_back(layer_to_json(l));
  return arr;
}

std::vector<LayerSpec> chain_from_json(const nlohmann::json& arr) {
  std::vector<LayerSpec> chain;
  for (const auto& j : arr) chain.push_back(layer_from_json(j));
  return chain;
}

void check_blobs(const ModelBundle& b, const std::vector<LayerSpec>& chain) {
  for (const auto& layer : chain) {
    for (const auto& [name, shape] : required_blobs(layer, b.num_classes)) {
      const auto it = b.tensors.find(name);
      if (it == b.tensors.end()) {
        throw Error(Errc::missing_blob, std::string("missing weight blob '") + name +
                                            "' required by " + layer_kind_name(layer.kind) +
                                            " layer '" + layer.name + "'");
      }
      if (it->second.shape() != shape) {
        throw Error(Errc::blob_shape, "blob '" + name + "' has shape " +
                                          shape_str(it->second.shape()) + ", expected " +
                                          shape_str(shape));
      }
    }
  }
}

void check_allowed(const std::vector<LayerSpec>& chain, std::string_view chain_name,
                   std::initializer_list<LayerKind> allowed) {
  for (std::size_t i = 0; i < chain.size(); ++i) {
    bool ok = false;
    for (LayerKind k : allowed) ok = ok || chain[i].kind == k;
    if (!ok) chain_error(chain_name, i, chain[i], "kind not allowed in this network");
  }
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  for (const auto& [k, n] : kKindNames) {
    if (k == kind) return n;
  }
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
  }
  return std::nullopt;
}

const char* pixel_model_name(PixelModel model) {
  return model == PixelModel::gaussian ? "gaussian" : "categorical";
}

std::vector<std::pair<std::string, Shape>> required_blobs(const LayerSpec& l,
                                                          std::size_t num_classes) {
  const auto& c = l.conv;
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::masked_conv_A:
    case LayerKind::masked_conv_B:
      return {{l.name + ".bias", {c.out_channels}},
              {l.name + ".weight", {c.out_channels, c.in_channels, c.kernel_h, c.kernel_w}}};
    case LayerKind::conv_transpose:
      return {{l.name + ".bias", {c.out_channels}},
              {l.name + ".weight", {c.in_channels, c.out_channels, c.kernel_h, c.kernel_w}}};
    case LayerKind::batchnorm:
      return {{l.name + ".beta", {l.channels}},
              {l.name + ".gamma", {l.channels}},
              {l.name + ".running_mean", {l.channels}},
              {l.name + ".running_var", {l.channels}}};
    case LayerKind::residual_block:
      return {{l.name + ".conv1.bias", {l.hidden}},
              {l.name + ".conv1.weight", {l.hidden, l.channels, 3, 3}},
              {l.name + ".conv2.bias", {l.channels}},
              {l.name + ".conv2.weight", {l.channels, l.hidden, 1, 1}}};
    case LayerKind::class_embedding:
      return {{l.name + ".table", {num_classes, l.channels}}};
    default:
      return {};
  }
}

const Tensor& ModelBundle::blob(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(Errc::missing_blob, "missing weight blob '" + name + "'");
  return it->second;
}

Shape infer_chain_shape(const std::vector<LayerSpec>& chain, const Shape& input,
                        std::string_view chain_name) {
  Shape s = input;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const LayerSpec& l = chain[i];
    if (s.size() != 3) chain_error(chain_name, i, l, "expects a [C,H,W] input");
    if (is_head(l.kind) && i + 1 != chain.size()) {
      chain_error(chain_name, i, l, "heads must be the last layer");
    }
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::conv_transpose:
      case LayerKind::masked_conv_A:
      case LayerKind::masked_conv_B: {
        const bool transposed = l.kind == LayerKind::conv_transpose;
        if (l.conv.transposed != transposed) chain_error(chain_name, i, l, "transposed flag");
        try {
          check_conv_spec(l.conv);
        } catch (const Error& e) {
          chain_error(chain_name, i, l, e.what());
        }
        if (l.conv.mask_kind != MaskKind::none &&
            (l.conv.stride != 1 || l.conv.kernel_h != l.conv.kernel_w ||
             2 * l.conv.padding + 1 != l.conv.kernel_h)) {
          chain_error(chain_name, i, l,
                      "masked convolutions need stride 1, square kernels and same padding");
        }
        if (s[0] != l.conv.in_channels) {
          chain_error(chain_name, i, l, "input has " + std::to_string(s[0]) +
                                            " channels, layer expects " +
                                            std::to_string(l.conv.in_channels));
        }
        try {
          s = {l.conv.out_channels,
               conv_out_extent(s[1], l.conv.kernel_h, l.conv.stride, l.conv.padding, transposed),
               conv_out_extent(s[2], l.conv.kernel_w, l.conv.stride, l.conv.padding, transposed)};
        } catch (const Error& e) {
          chain_error(chain_name, i, l, e.what());
        }
        break;
      }
      case LayerKind::batchnorm:
      case LayerKind::residual_block:
      case LayerKind::class_embedding:
        if (s[0] != l.channels) {
          chain_error(chain_name, i, l, "input has " + std::to_string(s[0]) +
                                            " channels, layer expects " +
                                            std::to_string(l.channels));
        }
        if (l.kind == LayerKind::residual_block && l.hidden == 0) {
          chain_error(chain_name, i, l, "hidden width must be positive");
        }
        break;
      case LayerKind::relu:
      case LayerKind::sigmoid:
        break;
      case LayerKind::softmax_head:
        if (l.channels == 0 || s[0] % l.channels != 0) {
          chain_error(chain_name, i, l, "channel count " + std::to_string(s[0]) +
                                            " is not a multiple of group width " +
                                            std::to_string(l.channels));
        }
        break;
      case LayerKind::gaussian_head:
        if (s[0] % 2 != 0) chain_error(chain_name, i, l, "needs an even channel count");
        break;
    }
  }
  return s;
}

void validate_bundle(const ModelBundle& b) {
  if (b.format_version != kBundleFormatVersion) {
    throw Error(Errc::version_mismatch,
                "bundle format_version " + std::to_string(b.format_version) + " unsupported");
  }
  if (b.image_shape.size() != 3 || shape_numel(b.image_shape) == 0) {
    throw Error(Errc::malformed_metadata, "image_shape must be three positive extents (d,h,w)");
  }
  if (b.latent_shape.size() != 2 || shape_numel(b.latent_shape) == 0) {
    throw Error(Errc::malformed_metadata, "latent_shape must be two positive extents (H,W)");
  }
  if (b.num_classes == 0) throw Error(Errc::class_prior, "class_prior: num_classes is zero");
  if (b.class_prior.size() != b.num_classes) {
    throw Error(Errc::class_prior, "class_prior has " + std::to_string(b.class_prior.size()) +
                                       " entries for " + std::to_string(b.num_classes) +
                                       " classes");
  }
  double total = 0.0;
  for (double p : b.class_prior) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(Errc::class_prior, "class_prior has a negative or non-finite entry");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(Errc::class_prior,
                "class_prior sums to " + std::to_string(total) + ", not 1 within 1e-9");
  }

  const auto cb = b.tensors.find("codebook");
  if (cb == b.tensors.end()) throw Error(Errc::missing_blob, "missing weight blob 'codebook'");
  if (cb->second.rank() != 2 || cb->second.numel() == 0) {
    throw Error(Errc::blob_shape, "codebook must be a non-empty [K, D] matrix");
  }
  const std::size_t K = cb->second.dim(0), D = cb->second.dim(1);
  const auto row = [&](std::size_t k) { return cb->second.data().subspan(k * D, D); };
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t c = a + 1; c < K; ++c) {
      if (std::equal(row(a).begin(), row(a).end(), row(c).begin())) {
        throw Error(Errc::duplicate_codeword, "codebook rows " + std::to_string(a) + " and " +
                                                  std::to_string(c) + " are identical");
      }
    }
  }

  for (const auto& [name, t] : b.tensors) {
    for (double v : t.data()) {
      if (!std::isfinite(v) || static_cast<double>(static_cast<float>(v)) != v) {
        throw Error(Errc::invalid_argument,
                    "blob '" + name + "' holds a value that is not a finite float32");
      }
    }
  }

  check_blobs(b, b.encoder);
  check_blobs(b, b.decoder);
  check_blobs(b, b.prior);

  const std::size_t H = b.latent_shape[0], W = b.latent_shape[1];
  const Shape latent{D, H, W};

  check_allowed(b.encoder, "encoder",
                {LayerKind::conv, LayerKind::conv_transpose, LayerKind::batchnorm,
                 LayerKind::relu, LayerKind::sigmoid, LayerKind::residual_block});
  const Shape enc_out = infer_chain_shape(b.encoder, b.image_shape, "encoder");
  if (enc_out != latent) {
    throw Error(Errc::shape_chain, "encoder output " + shape_str(enc_out) +
                                       " does not match latent " + shape_str(latent));
  }

  check_allowed(b.decoder, "decoder",
                {LayerKind::conv, LayerKind::conv_transpose, LayerKind::batchnorm,
                 LayerKind::relu, LayerKind::sigmoid, LayerKind::residual_block,
                 LayerKind::softmax_head, LayerKind::gaussian_head});
  const Shape dec_out = infer_chain_shape(b.decoder, latent, "decoder");
  const std::size_t d = b.image_shape[0];
  if (b.decoder.empty()) throw Error(Errc::shape_chain, "decoder chain is empty");
  const LayerSpec& head = b.decoder.back();
  Shape want;
  if (b.pixel_model == PixelModel::gaussian) {
    if (head.kind != LayerKind::gaussian_head) {
      throw Error(Errc::shape_chain, "gaussian bundles must end the decoder in gaussian_head");
    }
    want = {2 * d, b.image_shape[1], b.image_shape[2]};
  } else {
    if (head.kind != LayerKind::softmax_head || head.channels != kCategoricalLevels) {
      throw Error(Errc::shape_chain,
                  "categorical bundles must end the decoder in a 256-way softmax_head");
    }
    want = {kCategoricalLevels * d, b.image_shape[1], b.image_shape[2]};
  }
  if (dec_out != want) {
    throw Error(Errc::shape_chain, "decoder head input " + shape_str(dec_out) + ", expected " +
                                       shape_str(want));
  }

  check_allowed(b.prior, "prior",
                {LayerKind::masked_conv_A, LayerKind::masked_conv_B, LayerKind::relu,
                 LayerKind::class_embedding, LayerKind::softmax_head});
  if (b.prior.empty() || b.prior.back().kind != LayerKind::softmax_head ||
      b.prior.back().channels != K) {
    throw Error(Errc::shape_chain, "prior must end in a K-way softmax_head");
  }
  for (std::size_t i = 0; i < b.prior.size(); ++i) {
    const LayerKind k = b.prior[i].kind;
    if (k == LayerKind::masked_conv_B) {
      chain_error("prior", i, b.prior[i], "the first masked convolution must be mask A");
    }
    if (k == LayerKind::masked_conv_A) break;
  }
  const Shape prior_out = infer_chain_shape(b.prior, Shape{K, H, W}, "prior");
  if (prior_out != Shape{K, H, W}) {
    throw Error(Errc::shape_chain,
                "prior output " + shape_str(prior_out) + " must be " + shape_str({K, H, W}));
  }
}

std::string serialize_bundle(const ModelBundle& b) {
  validate_bundle(b);
  nlohmann::json meta{
      {"format", "vqdm-bundle"},
      {"pixel_model", pixel_model_name(b.pixel_model)},
      {"image_shape", b.image_shape},
      {"latent_shape", b.latent_shape},
      {"num_codes", b.num_codes()},
      {"code_dim", b.code_dim()},
      {"num_classes", b.num_classes},
      {"class_prior", b.class_prior},
      {"encoder", chain_to_json(b.encoder)},
      {"decoder", chain_to_json(b.decoder)},
      {"prior", chain_to_json(b.prior)},
  };
  return detail::encode_container(kBundleMagic, b.format_version, std::move(meta), b.tensors,
                                  detail::BlobType::f32);
}

ModelBundle parse_bundle(const std::string& bytes) {
  detail::Container c = detail::decode_container(bytes, kBundleMagic, kBundleFormatVersion);
  ModelBundle b;
  b.format_version = c.version;
  try {
    const auto& m = c.meta;
    const auto pm = m.at("pixel_model").get<std::string>();
    if (pm == "gaussian") {
      b.pixel_model = PixelModel::gaussian;
    } else if (pm == "categorical") {
      b.pixel_model = PixelModel::categorical;
    } else {
      throw Error(Errc::malformed_metadata, "unknown pixel_model '" + pm + "'");
    }
    b.image_shape = m.at("image_shape").get<Shape>();
    b.latent_shape = m.at("latent_shape").get<Shape>();
    b.num_classes = m.at("num_classes").get<std::size_t>();
    if (m.contains("class_prior") && !m.at("class_prior").is_null()) {
      b.class_prior = m.at("class_prior").get<std::vector<double>>();
    } else if (b.num_classes > 0) {
      b.class_prior.assign(b.num_classes, 1.0 / static_cast<double>(b.num_classes));
    }
    b.encoder = chain_from_json(m.at("encoder"));
    b.decoder = chain_from_json(m.at("decoder"));
    b.prior = chain_from_json(m.at("prior"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_metadata, std::string("bundle metadata: ") + e.what());
  }
  b.tensors = std::move(c.blobs);
  validate_bundle(b);
  return b;
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  return parse_bundle(detail::read_file(path));
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  detail::write_file(path, serialize_bundle(bundle));
}

}  // namespace vqdm
