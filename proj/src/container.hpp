#pragma once

// Shared binary container for bundles and mixture sidecars:
// magic | u32 version | u64 metadata length | JSON metadata | blobs.
// The metadata carries a "blobs" table of {name, shape, dtype} in sorted-name
// order; blob payloads follow in that order with no padding.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "vqdm/tensor.hpp"

namespace vqdm::detail {

enum class BlobType { f32, f64 };

struct Container {
  std::uint32_t version = 0;
  nlohmann::json meta;
  std::map<std::string, Tensor> blobs;
};

std::string encode_container(std::string_view magic, std::uint32_t version,
                             nlohmann::json meta, const std::map<std::string, Tensor>& blobs,
                             BlobType type);

Container decode_container(const std::string& bytes, std::string_view magic,
                           std::uint32_t expected_version);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace vqdm::detail
