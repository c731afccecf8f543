#include "vqdm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "container.hpp"
#include "vqdm/error.hpp"
#include "vqdm/rng.hpp"

namespace vqdm {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;

std::uint32_t get_be32(const std::string& bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) {
    throw Error(Errc::unexpected_eof, "IDX header: unexpected end of file");
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

std::size_t parse_size(const std::string& text, const std::string& spec) {
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::invalid_argument, "malformed mask spec '" + spec + "'");
  }
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  if (get_be32(bytes, 0) != kIdxImageMagic) {
    throw Error(Errc::bad_magic, path.string() + " is not an IDX ubyte image file");
  }
  IdxImages out;
  const std::size_t count = get_be32(bytes, 4);
  out.rows = get_be32(bytes, 8);
  out.cols = get_be32(bytes, 12);
  const std::size_t plane = out.rows * out.cols;
  if (bytes.size() != 16 + count * plane) {
    throw Error(Errc::unexpected_eof, path.string() + ": IDX payload holds " +
                                          std::to_string(bytes.size() - 16) +
                                          " bytes, header declares " +
                                          std::to_string(count * plane));
  }
  out.images.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    const auto* src = reinterpret_cast<const std::uint8_t*>(bytes.data() + 16 + n * plane);
    out.images[n].assign(src, src + plane);
  }
  return out;
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  std::string out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.images.size()));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  for (const auto& img : images.images) {
    if (img.size() != images.rows * images.cols) {
      throw Error(Errc::shape_mismatch, "IDX image size does not match rows x cols");
    }
    out.append(reinterpret_cast<const char*>(img.data()), img.size());
  }
  detail::write_file(path, out);
}

std::vector<Tensor> preprocess_images(const IdxImages& raw, const Shape& image_shape,
                                      Preprocess mode, std::uint64_t seed) {
  if (image_shape.size() != 3 || image_shape[0] != 1 || image_shape[1] != raw.rows ||
      image_shape[2] != raw.cols) {
    throw Error(Errc::shape_mismatch, "dataset images are " + std::to_string(raw.rows) + "x" +
                                          std::to_string(raw.cols) + ", model expects " +
                                          shape_str(image_shape));
  }
  Rng rng(seed);
  std::vector<Tensor> out;
  out.reserve(raw.images.size());
  for (const auto& img : raw.images) {
    Tensor t(image_shape);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double v = img[i];
      t[i] = mode == Preprocess::jitter ? (v + rng.uniform()) / 256.0 : v / 255.0;
    }
    out.push_back(std::move(t));
  }
  return out;
}

EvidenceMask parse_mask_spec(const std::string& spec, const Shape& image_shape) {
  if (image_shape.size() != 3) throw Error(Errc::shape_mismatch, "mask needs a [d,h,w] shape");
  const std::size_t d = image_shape[0], h = image_shape[1], w = image_shape[2];
  EvidenceMask mask = EvidenceMask::all(d * h * w);
  const auto occlude = [&](std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
    if (r0 > r1 || c0 > c1 || r1 > h || c1 > w) {
      throw Error(Errc::invalid_argument, "mask rectangle outside the " + std::to_string(h) +
                                              "x" + std::to_string(w) + " image in '" + spec +
                                              "'");
    }
    for (std::size_t c = 0; c < d; ++c) {
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t col = c0; col < c1; ++col) mask.observed[(c * h + r) * w + col] = 0;
      }
    }
  };

  std::stringstream parts(spec);
  std::string part;
  bool any = false;
  while (std::getline(parts, part, '+')) {
    any = true;
    if (part == "none") {
      continue;
    } else if (part == "top") {
      occlude(0, 0, h / 2, w);
    } else if (part == "bottom") {
      occlude(h / 2, 0, h, w);
    } else if (part == "left") {
      occlude(0, 0, h, w / 2);
    } else if (part == "right") {
      occlude(0, w / 2, h, w);
    } else if (part.rfind("rect:", 0) == 0) {
      std::stringstream nums(part.substr(5));
      std::string tok;
      std::vector<std::size_t> v;
      while (std::getline(nums, tok, ',')) v.push_back(parse_size(tok, spec));
      if (v.size() != 4) throw Error(Errc::invalid_argument, "malformed mask spec '" + spec + "'");
      occlude(v[0], v[1], v[2], v[3]);
    } else {
      throw Error(Errc::invalid_argument, "malformed mask spec '" + spec + "'");
    }
  }
  if (!any) throw Error(Errc::invalid_argument, "empty mask spec");
  return mask;
}

std::uint8_t to_byte(double v) {
  const double scaled = std::floor(v * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

std::string encode_pgm_grid(const std::vector<Tensor>& images, std::size_t columns) {
  if (images.empty()) throw Error(Errc::invalid_argument, "image grid needs at least one image");
  const Shape& shape = images.front().shape();
  if (shape.size() != 3) throw Error(Errc::shape_mismatch, "grid images must be [d,h,w]");
  const std::size_t h = shape[1], w = shape[2];
  columns = std::max<std::size_t>(1, std::min(columns, images.size()));
  const std::size_t rows = (images.size() + columns - 1) / columns;
  const std::size_t width = columns * w, height = rows * h;
  std::string pixels(width * height, '\0');
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n].shape() != shape) throw Error(Errc::shape_mismatch, "grid images differ in shape");
    const std::size_t oy = (n / columns) * h, ox = (n % columns) * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        pixels[(oy + y) * width + ox + x] = static_cast<char>(to_byte(images[n][y * w + x]));
      }
    }
  }
  return "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n" + pixels;
}

void write_pgm_grid(const std::filesystem::path& path, const std::vector<Tensor>& images,
                    std::size_t columns) {
  detail::write_file(path, encode_pgm_grid(images, columns));
}

}  // namespace vqdm
