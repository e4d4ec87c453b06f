#pragma once

#include <stdexcept>
#include <string>

namespace gsrm {

enum class ErrorCode {
  io,
  format,
  dimension_mismatch,
  invalid_argument,
  empty_input,
  index_out_of_range,
  missing_features,
  graph_empty,
  numerical,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::index_out_of_range: return "index_out_of_range";
    case ErrorCode::missing_features: return "missing_features";
    case ErrorCode::graph_empty: return "graph_empty";
    case ErrorCode::numerical: return "numerical";
  }
  return "unknown";
}

// Every library failure is reported through this type; the code lets the
// CLI map failures onto exit statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gsrm
