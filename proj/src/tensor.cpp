#include "vqdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "vqdm/error.hpp"

namespace vqdm {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw Error(Errc::shape_mismatch, "tensor shape " + shape_str(shape_) + " holds " +
                                          std::to_string(shape_numel(shape_)) +
                                          " values but data has " +
                                          std::to_string(data_.size()));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw Error(Errc::shape_mismatch, "axis " + std::to_string(axis) +
                                          " out of range for shape " + shape_str(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t c, std::size_t y, std::size_t x) {
  return data_[(c * shape_[1] + y) * shape_[2] + x];
}

double Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  return data_[(c * shape_[1] + y) * shape_[2] + x];
}

void check_finite(const Tensor& t, std::string_view where) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t[i])) {
      throw Error(Errc::non_finite, std::string(where) + ": non-finite value at flat index " +
                                        std::to_string(i));
    }
  }
}

namespace {

void expect_dim(std::string_view op, std::string_view what, std::size_t got,
                std::size_t want) {
  if (got != want) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": " + std::string(what) + " is " +
                                          std::to_string(got) + ", expected " +
                                          std::to_string(want));
  }
}

void expect_rank(std::string_view op, std::string_view what, const Tensor& t,
                 std::size_t rank) {
  if (t.rank() != rank) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": " + std::string(what) +
                                          " must have rank " + std::to_string(rank) +
                                          ", got shape " + shape_str(t.shape()));
  }
}

void check_conv_operands(std::string_view op, const Tensor& input, const Tensor& weights,
                         const Tensor& bias, const ConvSpec& spec) {
  check_conv_spec(spec);
  expect_rank(op, "input", input, 3);
  expect_rank(op, "weights", weights, 4);
  expect_rank(op, "bias", bias, 1);
  expect_dim(op, "input channels", input.dim(0), spec.in_channels);
  if (spec.transposed) {
    expect_dim(op, "weights dim 0 (in_channels)", weights.dim(0), spec.in_channels);
    expect_dim(op, "weights dim 1 (out_channels)", weights.dim(1), spec.out_channels);
  } else {
    expect_dim(op, "weights dim 0 (out_channels)", weights.dim(0), spec.out_channels);
    expect_dim(op, "weights dim 1 (in_channels)", weights.dim(1), spec.in_channels);
  }
  expect_dim(op, "weights dim 2 (kernel_h)", weights.dim(2), spec.kernel_h);
  expect_dim(op, "weights dim 3 (kernel_w)", weights.dim(3), spec.kernel_w);
  expect_dim(op, "bias length", bias.dim(0), spec.out_channels);
}

}  // namespace

void check_conv_spec(const ConvSpec& spec) {
  if (spec.stride == 0) throw Error(Errc::invalid_argument, "conv: stride must be >= 1");
  if (spec.kernel_h == 0 || spec.kernel_w == 0 || spec.in_channels == 0 ||
      spec.out_channels == 0) {
    throw Error(Errc::invalid_argument, "conv: kernel and channel sizes must be positive");
  }
  if (spec.mask_kind != MaskKind::none) {
    if (spec.transposed) {
      throw Error(Errc::invalid_argument, "conv: masked convolutions cannot be transposed");
    }
    if (spec.kernel_h % 2 == 0 || spec.kernel_w % 2 == 0) {
      throw Error(Errc::invalid_argument, "conv: masked convolutions need odd kernel sizes");
    }
  }
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding, bool transposed) {
  if (transposed) {
    const std::size_t grown = (in - 1) * stride + kernel;
    if (grown <= 2 * padding) {
      throw Error(Errc::shape_mismatch, "conv_transpose: padding leaves no output");
    }
    return grown - 2 * padding;
  }
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel) {
    throw Error(Errc::shape_mismatch, "conv: kernel " + std::to_string(kernel) +
                                          " larger than padded input " +
                                          std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

std::vector<double> causal_mask(std::size_t kernel_h, std::size_t kernel_w, MaskKind kind) {
  std::vector<double> mask(kernel_h * kernel_w, 1.0);
  if (kind == MaskKind::none) return mask;
  const std::size_t center = (kernel_h / 2) * kernel_w + kernel_w / 2;
  const std::size_t first_zero = kind == MaskKind::A ? center : center + 1;
  for (std::size_t i = first_zero; i < mask.size(); ++i) mask[i] = 0.0;
  return mask;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvSpec& spec) {
  if (spec.transposed) {
    throw Error(Errc::invalid_argument, "conv2d: spec is marked transposed");
  }
  check_conv_operands("conv2d", input, weights, bias, spec);

  const std::size_t in_h = input.dim(1), in_w = input.dim(2);
  const std::size_t out_h =
      conv_out_extent(in_h, spec.kernel_h, spec.stride, spec.padding, false);
  const std::size_t out_w =
      conv_out_extent(in_w, spec.kernel_w, spec.stride, spec.padding, false);
  const std::vector<double> mask = causal_mask(spec.kernel_h, spec.kernel_w, spec.mask_kind);

  Tensor out({spec.out_channels, out_h, out_w});
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);

  for (std::size_t co = 0; co < spec.out_channels; ++co) {
    double* dst = out.data().data() + co * out_h * out_w;
    std::fill(dst, dst + out_h * out_w, bias[co]);
    for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
      const double* src = input.data().data() + ci * in_h * in_w;
      for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
          if (mask[ky * spec.kernel_w + kx] == 0.0) continue;
          const double w =
              weights[((co * spec.in_channels + ci) * spec.kernel_h + ky) * spec.kernel_w + kx];
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * stride - pad +
                                      static_cast<std::ptrdiff_t>(ky);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
            const double* row = src + static_cast<std::size_t>(iy) * in_w;
            double* orow = dst + oy * out_w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * stride - pad +
                                        static_cast<std::ptrdiff_t>(kx);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
              orow[ox] += w * row[ix];
            }
          }
        }
      }
    }
  }
  check_finite(out, "conv2d");
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                        const ConvSpec& spec) {
  if (!spec.transposed) {
    throw Error(Errc::invalid_argument, "conv_transpose2d: spec is not marked transposed");
  }
  check_conv_operands("conv_transpose2d", input, weights, bias, spec);

  const std::size_t in_h = input.dim(1), in_w = input.dim(2);
  const std::size_t out_h =
      conv_out_extent(in_h, spec.kernel_h, spec.stride, spec.padding, true);
  const std::size_t out_w =
      conv_out_extent(in_w, spec.kernel_w, spec.stride, spec.padding, true);

  Tensor out({spec.out_channels, out_h, out_w});
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto stride = static_cast<std::ptrdiff_t>(spec.stride);

  for (std::size_t co = 0; co < spec.out_channels; ++co) {
    double* dst = out.data().data() + co * out_h * out_w;
    std::fill(dst, dst + out_h * out_w, bias[co]);
    for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
      const double* src = input.data().data() + ci * in_h * in_w;
      for (std::size_t ky = 0; ky < spec.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < spec.kernel_w; ++kx) {
          const double w =
              weights[((ci * spec.out_channels + co) * spec.kernel_h + ky) * spec.kernel_w + kx];
          for (std::size_t iy = 0; iy < in_h; ++iy) {
            const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy) * stride - pad +
                                      static_cast<std::ptrdiff_t>(ky);
            if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(out_h)) continue;
            double* orow = dst + static_cast<std::size_t>(oy) * out_w;
            const double* row = src + iy * in_w;
            for (std::size_t ix = 0; ix < in_w; ++ix) {
              const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix) * stride - pad +
                                        static_cast<std::ptrdiff_t>(kx);
              if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(out_w)) continue;
              orow[ox] += w * row[ix];
            }
          }
        }
      }
    }
  }
  check_finite(out, "conv_transpose2d");
  return out;
}

Tensor batchnorm_inference(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           const Tensor& running_mean, const Tensor& running_var,
                           double eps) {
  expect_rank("batchnorm", "input", input, 3);
  const std::size_t channels = input.dim(0);
  for (const Tensor* p : {&gamma, &beta, &running_mean, &running_var}) {
    expect_rank("batchnorm", "parameter", *p, 1);
    expect_dim("batchnorm", "parameter length", p->dim(0), channels);
  }
  if (eps < 0.0) throw Error(Errc::invalid_argument, "batchnorm: eps must be non-negative");

  Tensor out(input.shape());
  const std::size_t plane = input.dim(1) * input.dim(2);
  for (std::size_t c = 0; c < channels; ++c) {
    if (running_var[c] < 0.0) {
      throw Error(Errc::invalid_argument,
                  "batchnorm: running_var[" + std::to_string(c) + "] is negative");
    }
    const double denom = std::sqrt(running_var[c] + eps);
    if (denom == 0.0) {
      throw Error(Errc::invalid_argument,
                  "batchnorm: running_var + eps is zero in channel " + std::to_string(c));
    }
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = c * plane + i;
      out[idx] = (input[idx] - running_mean[c]) / denom * gamma[c] + beta[c];
    }
  }
  check_finite(out, "batchnorm");
  return out;
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Tensor relu(const Tensor& t) {
  Tensor out(t);
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor sigmoid(const Tensor& t) {
  Tensor out(t);
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  if (lo > hi) throw Error(Errc::invalid_argument, "clamp: lo > hi");
  Tensor out(t);
  for (double& v : out.data()) v = std::clamp(v, lo, hi);
  return out;
}

double log_sum_exp(std::span<const double> values) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : values) top = std::max(top, v);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

Tensor softmax_lastdim(const Tensor& t) {
  if (t.rank() == 0 || t.numel() == 0) {
    throw Error(Errc::shape_mismatch, "softmax_lastdim: empty tensor");
  }
  const std::size_t width = t.shape().back();
  Tensor out(t);
  for (std::size_t row = 0; row < t.numel() / width; ++row) {
    double* v = out.data().data() + row * width;
    const double top = *std::max_element(v, v + width);
    double acc = 0.0;
    for (std::size_t i = 0; i < width; ++i) {
      v[i] = std::exp(v[i] - top);
      acc += v[i];
    }
    for (std::size_t i = 0; i < width; ++i) v[i] /= acc;
  }
  check_finite(out, "softmax_lastdim");
  return out;
}

Tensor embedding_lookup(const Tensor& table, std::size_t index) {
  expect_rank("embedding_lookup", "table", table, 2);
  if (index >= table.dim(0)) {
    throw Error(Errc::invalid_argument, "embedding_lookup: index " + std::to_string(index) +
                                            " out of range [0, " +
                                            std::to_string(table.dim(0)) + ")");
  }
  const std::size_t width = table.dim(1);
  const auto begin = table.data().begin() + static_cast<std::ptrdiff_t>(index * width);
  return Tensor({width}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(width)));
}

}  // namespace vqdm
