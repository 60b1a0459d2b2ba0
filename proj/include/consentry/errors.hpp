#pragma once

#include <stdexcept>
#include <string>

namespace consentry {

enum class ErrorCode {
  invalid_input,
  dimension_mismatch,
  unsupported_degenerate,
  uio_infeasible_rank,
  uio_infeasible_detectability,
  design_infeasible,
  parse_error,
  load_rejected,
  io_error,
};

/// Toolkit-wide exception carrying a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::unsupported_degenerate: return "unsupported-degenerate";
    case ErrorCode::uio_infeasible_rank: return "uio-infeasible(rank)";
    case ErrorCode::uio_infeasible_detectability: return "uio-infeasible(detectability)";
    case ErrorCode::design_infeasible: return "design-infeasible";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::load_rejected: return "load-rejected";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

}  // namespace consentry
