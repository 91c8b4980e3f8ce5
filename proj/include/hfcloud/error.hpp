#pragma once

#include <stdexcept>
#include <string>

namespace hfcloud {

enum class Errc {
  missing_file,
  dimension_mismatch,
  corrupt_metadata,
  invalid_argument,
  shape_mismatch,
  bad_magic,
  unsupported_version,
  truncated,
  divergence,
  not_found,
  duplicate,
  config,
  untrained,
  io,
};

const char* errc_name(Errc code) noexcept;

/// Every module reports failures through this exception; `code()` tells
/// callers which of the documented error cases occurred.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace hfcloud
