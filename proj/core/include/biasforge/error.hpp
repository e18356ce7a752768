#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace biasforge {

enum class Errc {
  missing_file,
  unsupported_format,
  corrupt_data,
  io_failure,
  range_mismatch,
  shape_mismatch,
  invalid_argument,
  count_mismatch,
  bad_value,
  wrong_column_count,
  empty_input,
  unresolved_id,
  non_finite,
  config_error,
  hash_mismatch,
  missing_parameters,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Raised by text-format readers; carries the 1-based line that failed.
class ParseError : public Error {
 public:
  ParseError(Errc code, std::size_t line, const std::string& what);

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

}  // namespace biasforge
