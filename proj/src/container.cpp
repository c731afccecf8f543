#include "container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "vqdm/error.hpp"

namespace vqdm::detail {

namespace {

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw Error(Errc::unexpected_eof,
                  "unexpected end of file at byte " + std::to_string(bytes_.size()) +
                      " (needed " + std::to_string(n) + " more at offset " +
                      std::to_string(pos_) + ")");
    }
    std::string_view v(bytes_.data() + pos_, n);
    pos_ += n;
    return v;
  }

  template <typename U>
  U get_le() {
    const std::string_view raw = take(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(raw[i])) << (8 * i);
    }
    return value;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

const char* type_name(BlobType t) { return t == BlobType::f32 ? "f32" : "f64"; }

}  // namespace

std::string encode_container(std::string_view magic, std::uint32_t version,
                             nlohmann::json meta, const std::map<std::string, Tensor>& blobs,
                             BlobType type) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, tensor] : blobs) {
    table.push_back({{"name", name}, {"shape", tensor.shape()}, {"dtype", type_name(type)}});
  }
  meta["blobs"] = std::move(table);
  const std::string text = meta.dump();

  std::string out;
  out.append(magic);
  put_le<std::uint32_t>(out, version);
  put_le<std::uint64_t>(out, text.size());
  out.append(text);
  for (const auto& [name, tensor] : blobs) {
    for (double v : tensor.data()) {
      if (type == BlobType::f32) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

Container decode_container(const std::string& bytes, std::string_view magic,
                           std::uint32_t expected_version) {
  Reader reader(bytes);
  if (bytes.size() < magic.size() || reader.take(magic.size()) != magic) {
    throw Error(Errc::bad_magic, "bad magic header: expected \"" + std::string(magic) + "\"");
  }
  Container c;
  c.version = reader.get_le<std::uint32_t>();
  if (c.version != expected_version) {
    throw Error(Errc::version_mismatch, "format version " + std::to_string(c.version) +
                                            " is not supported (expected " +
                                            std::to_string(expected_version) + ")");
  }
  const auto meta_len = reader.get_le<std::uint64_t>();
  const std::string_view text = reader.take(static_cast<std::size_t>(meta_len));
  try {
    c.meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_metadata, std::string("metadata is not valid JSON: ") + e.what());
  }

  try {
    const auto& table = c.meta.at("blobs");
    std::string previous;
    for (const auto& entry : table) {
      const auto name = entry.at("name").get<std::string>();
      if (!previous.empty() && name <= previous) {
        throw Error(Errc::malformed_metadata, "blob table not in sorted-name order at " + name);
      }
      previous = name;
      const auto shape = entry.at("shape").get<Shape>();
      const auto dtype = entry.at("dtype").get<std::string>();
      const std::size_t n = shape_numel(shape);
      std::vector<double> data(n);
      if (dtype == "f32") {
        for (std::size_t i = 0; i < n; ++i) {
          data[i] = static_cast<double>(std::bit_cast<float>(reader.get_le<std::uint32_t>()));
        }
      } else if (dtype == "f64") {
        for (std::size_t i = 0; i < n; ++i) {
          data[i] = std::bit_cast<double>(reader.get_le<std::uint64_t>());
        }
      } else {
        throw Error(Errc::malformed_metadata, "blob " + name + " has unknown dtype " + dtype);
      }
      c.blobs.emplace(name, Tensor(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::malformed_metadata, std::string("bad blob table: ") + e.what());
  }
  if (reader.remaining() != 0) {
    throw Error(Errc::malformed_metadata,
                std::to_string(reader.remaining()) + " trailing bytes after last blob");
  }
  c.meta.erase("blobs");
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(Errc::io_error, "read failed for " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

}  // namespace vqdm::detail
