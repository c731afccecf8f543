#pragma once

// Reference implementations used only by the tests. Each one is written from
// the defining formula with plain loops and shares no code with the engine.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "vqdm/bundle.hpp"
#include "vqdm/synthetic.hpp"
#include "vqdm/tensor.hpp"
#include "vqdm/vq.hpp"

namespace oracle {

using vqdm::Shape;
using vqdm::Tensor;

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& gen, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(gen);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

// 'A' keeps taps strictly before the centre in raster order, 'B' also keeps the centre.
inline bool tap_allowed(char mask, std::size_t ky, std::size_t kx, std::size_t kh,
                        std::size_t kw) {
  if (mask == 'N') return true;
  const long cy = static_cast<long>(kh / 2), cx = static_cast<long>(kw / 2);
  const long y = static_cast<long>(ky), x = static_cast<long>(kx);
  if (y != cy) return y < cy;
  return mask == 'A' ? x < cx : x <= cx;
}

// out[co][oy][ox] = b[co] + sum_{ci,ky,kx} w[co][ci][ky][kx] * in[ci][oy*s-p+ky][ox*s-p+kx]
inline Tensor conv(const Tensor& in, const Tensor& w, const Tensor& b, std::size_t stride,
                   std::size_t pad, char mask = 'N') {
  const std::size_t cout = w.dim(0), cin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const long H = static_cast<long>(in.dim(1)), W = static_cast<long>(in.dim(2));
  const std::size_t oh = (in.dim(1) + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (in.dim(2) + 2 * pad - kw) / stride + 1;
  Tensor out({cout, oh, ow});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b[co];
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              if (!tap_allowed(mask, ky, kx, kh, kw)) continue;
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              acc += w[((co * cin + ci) * kh + ky) * kw + kx] *
                     in[(ci * in.dim(1) + static_cast<std::size_t>(iy)) * in.dim(2) +
                        static_cast<std::size_t>(ix)];
            }
        out.data()[(co * oh + oy) * ow + ox] = acc;
      }
  return out;
}

// Scatter form: every input pixel adds w[ci][co] * in to an output window.
inline Tensor conv_transpose(const Tensor& in, const Tensor& w, const Tensor& b,
                             std::size_t stride, std::size_t pad) {
  const std::size_t cin = w.dim(0), cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const std::size_t full_h = (in.dim(1) - 1) * stride + kh, full_w = (in.dim(2) - 1) * stride + kw;
  Tensor full({cout, full_h, full_w});
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t iy = 0; iy < in.dim(1); ++iy)
      for (std::size_t ix = 0; ix < in.dim(2); ++ix)
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx)
              full.data()[(co * full_h + iy * stride + ky) * full_w + ix * stride + kx] +=
                  w[((ci * cout + co) * kh + ky) * kw + kx] * in[(ci * in.dim(1) + iy) * in.dim(2) + ix];
  const std::size_t oh = full_h - 2 * pad, ow = full_w - 2 * pad;
  Tensor out({cout, oh, ow});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        out.data()[(co * oh + y) * ow + x] = b[co] + full[(co * full_h + y + pad) * full_w + x + pad];
  return out;
}

inline Tensor rectify(Tensor t) {
  for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
  return t;
}

inline Tensor batchnorm(Tensor t, const vqdm::ModelBundle& b, const std::string& name, double eps) {
  const std::size_t plane = t.dim(1) * t.dim(2);
  for (std::size_t c = 0; c < t.dim(0); ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      double& v = t.data()[c * plane + i];
      v = b.blob(name + ".gamma")[c] * (v - b.blob(name + ".running_mean")[c]) /
              std::sqrt(b.blob(name + ".running_var")[c] + eps) +
          b.blob(name + ".beta")[c];
    }
  return t;
}

inline Tensor residual(const Tensor& x, const vqdm::ModelBundle& b, const std::string& name) {
  Tensor h = conv(rectify(x), b.blob(name + ".conv1.weight"), b.blob(name + ".conv1.bias"), 1, 1);
  h = conv(rectify(h), b.blob(name + ".conv2.weight"), b.blob(name + ".conv2.bias"), 1, 0);
  for (std::size_t i = 0; i < h.numel(); ++i) h.data()[i] += x[i];
  return h;
}

inline double normal_logpdf(double x, double mean, double sd) {
  const double u = (x - mean) / sd;
  return -0.5 * u * u - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double lse(const std::vector<double>& v) {
  double m = -INFINITY;
  for (double x : v) m = std::max(m, x);
  if (m == -INFINITY) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// All K^cells index vectors in lexicographic order (cell 0 most significant).
inline std::vector<std::vector<std::uint32_t>> all_codes(std::size_t K, std::size_t cells) {
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::uint32_t> cur(cells, 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = cells;
    while (i > 0) {
      --i;
      if (++cur[i] < K) break;
      cur[i] = 0;
      if (i == 0) return out;
    }
    if (cells == 0) return out;
  }
}

inline vqdm::ModelBundle tiny_bundle(std::size_t K, std::size_t lh, std::size_t lw,
                                     std::uint64_t seed, std::size_t classes = 1,
                                     vqdm::PixelModel model = vqdm::PixelModel::gaussian,
                                     std::size_t factor = 2) {
  vqdm::SyntheticSpec s;
  s.num_codes = K;
  s.latent_h = lh;
  s.latent_w = lw;
  s.image_shape = {1, lh * factor, lw * factor};
  s.num_classes = classes;
  s.pixel_model = model;
  s.seed = seed;
  return vqdm::make_synthetic_bundle(s);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vqdm_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
