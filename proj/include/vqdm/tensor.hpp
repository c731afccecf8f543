#pragma once

// Forward-only dense kernels used to evaluate the encoder, decoder and
// latent prior networks. Everything accumulates in double precision with a
// fixed loop order, so identical inputs give bit-identical outputs.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace vqdm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Row-major dense array of doubles. Invariant: numel(shape) == data.size().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // 3-d accessors for [C, H, W] tensors.
  double& at(std::size_t c, std::size_t y, std::size_t x);
  double at(std::size_t c, std::size_t y, std::size_t x) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class MaskKind { none, A, B };

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool transposed = false;
  MaskKind mask_kind = MaskKind::none;

  bool operator==(const ConvSpec&) const = default;
};

// Throws Errc::invalid_argument when the spec violates its own invariants
// (masked kinds must be non-transposed with odd kernels, stride >= 1).
void check_conv_spec(const ConvSpec& spec);

// Output spatial extent of a (possibly transposed) convolution.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding, bool transposed);

// Raster-order causal mask for a kh x kw kernel: 1 where the tap is kept.
std::vector<double> causal_mask(std::size_t kernel_h, std::size_t kernel_w, MaskKind kind);

// Cross-correlation with zero padding. weights: [C_out, C_in, kh, kw].
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              const ConvSpec& spec);

// Adjoint of conv2d. weights: [C_in, C_out, kh, kw].
Tensor conv_transpose2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
                        const ConvSpec& spec);

Tensor batchnorm_inference(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                           const Tensor& running_mean, const Tensor& running_var,
                           double eps);

Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor clamp(const Tensor& t, double lo, double hi);
// Softmax over the last axis.
Tensor softmax_lastdim(const Tensor& t);
// Row `index` of a [K, D] table.
Tensor embedding_lookup(const Tensor& table, std::size_t index);

double sigmoid(double v);
double log_sum_exp(std::span<const double> values);

// Throws Errc::non_finite naming `where` if any entry is NaN or infinite.
void check_finite(const Tensor& t, std::string_view where);

}  // namespace vqdm
