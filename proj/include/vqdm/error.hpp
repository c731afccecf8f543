#pragma once

#include <stdexcept>
#include <string>

namespace vqdm {

enum class Errc {
  shape_mismatch,
  invalid_argument,
  non_finite,
  bad_magic,
  version_mismatch,
  unexpected_eof,
  malformed_metadata,
  missing_blob,
  blob_shape,
  shape_chain,
  class_prior,
  duplicate_codeword,
  capacity_exceeded,
  io_error,
};

const char* errc_name(Errc code);

// Single exception type for the engine; the code selects the CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Process exit status for an error code: 2 validation, 3 capacity, 4 I/O.
int exit_code_for(Errc code);

}  // namespace vqdm
