#include "vqdm/error.hpp"

namespace vqdm {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::non_finite: return "non_finite";
    case Errc::bad_magic: return "bad_magic";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::unexpected_eof: return "unexpected_eof";
    case Errc::malformed_metadata: return "malformed_metadata";
    case Errc::missing_blob: return "missing_blob";
    case Errc::blob_shape: return "blob_shape";
    case Errc::shape_chain: return "shape_chain";
    case Errc::class_prior: return "class_prior";
    case Errc::duplicate_codeword: return "duplicate_codeword";
    case Errc::capacity_exceeded: return "capacity_exceeded";
    case Errc::io_error: return "io_error";
  }
  return "unknown";
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::capacity_exceeded: return 3;
    case Errc::io_error: return 4;
    default: return 2;
  }
}

}  // namespace vqdm
