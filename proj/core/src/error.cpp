#include "biasforge/error.hpp"

namespace biasforge {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::missing_file: return "missing file";
    case Errc::unsupported_format: return "unsupported format";
    case Errc::corrupt_data: return "corrupt data";
    case Errc::io_failure: return "I/O failure";
    case Errc::range_mismatch: return "range mismatch";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::count_mismatch: return "count mismatch";
    case Errc::bad_value: return "bad value";
    case Errc::wrong_column_count: return "wrong column count";
    case Errc::empty_input: return "empty input";
    case Errc::unresolved_id: return "unresolved id";
    case Errc::non_finite: return "non-finite value";
    case Errc::config_error: return "config error";
    case Errc::hash_mismatch: return "hash mismatch";
    case Errc::missing_parameters: return "missing parameters";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(what), code_(code) {}

ParseError::ParseError(Errc code, std::size_t line, const std::string& what)
    : Error(code, "line " + std::to_string(line) + ": " + what), line_(line) {}

void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace biasforge
