#include "tinyvib/error.hpp"

namespace tinyvib {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::DegenerateInput: return "degenerate input";
    case ErrorCode::ShapeMismatch: return "shape mismatch";
    case ErrorCode::EmptyInput: return "empty input";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::BudgetExceeded: return "parameter budget exceeded";
    case ErrorCode::MissingQuantization: return "missing quantization parameters";
    case ErrorCode::Internal: return "internal error";
  }
  return "unknown error";
}

}  // namespace tinyvib
