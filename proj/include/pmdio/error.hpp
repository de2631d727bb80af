#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pmdio {

// Numeric values are shared with the C API (pmdio_status).
enum class Errc : int {
  ok = 0,
  already_exists = 1,
  corrupt_index = 2,
  collective_mismatch = 3,
  iteration_closed = 4,
  iteration_busy = 5,
  already_defined = 6,
  invalid_extent = 7,
  out_of_bounds = 8,
  codec_error = 9,
  io_error = 10,
  group_fault = 11,
  invalid_config = 12,
  corrupt_write = 13,
  corrupt_chunk = 14,
  unknown_codec = 15,
  decode_error = 16,
  parse_error = 17,
  no_checkpoint = 18,
  invalid_argument = 19,
  not_found = 20,
  not_defined = 21,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace pmdio
