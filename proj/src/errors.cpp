#include "replan/errors.hpp"

namespace replan {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kBounds: return "out of bounds";
    case ErrorCode::kStaleMap: return "stale distance field";
    case ErrorCode::kDomain: return "outside spline domain";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kGeneration: return "map generation failed";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kNumerical: return "numerical error";
    case ErrorCode::kConfig: return "configuration error";
  }
  return "unknown error";
}

}  // namespace replan
