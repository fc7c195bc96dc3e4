#include "otsforge/error.hpp"

namespace otsforge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::unknown_symbol: return "UnknownSymbol";
    case ErrorKind::not_an_operator: return "NotAnOperator";
    case ErrorKind::reconstruction: return "ReconstructionError";
    case ErrorKind::no_finite_points: return "NoFinitePoints";
    case ErrorKind::generation_exhausted: return "GenerationExhausted";
    case ErrorKind::rationality: return "RationalityError";
    case ErrorKind::io: return "IoError";
    case ErrorKind::corrupt_shard: return "CorruptShard";
    case ErrorKind::schema_mismatch: return "SchemaMismatch";
    case ErrorKind::degenerate_target: return "DegenerateTarget";
    case ErrorKind::no_candidates: return "NoCandidates";
    case ErrorKind::invalid_argument: return "InvalidArgument";
  }
  return "Error";
}

std::string_view to_string(ReconstructionReason reason) {
  switch (reason) {
    case ReconstructionReason::empty_sequence: return "empty_sequence";
    case ReconstructionReason::unknown_token: return "unknown_token";
    case ReconstructionReason::slot_mismatch: return "slot_mismatch";
    case ReconstructionReason::truncated: return "truncated";
    case ReconstructionReason::trailing_tokens: return "trailing_tokens";
    case ReconstructionReason::constant_count_mismatch:
      return "constant_count_mismatch";
  }
  return "unknown";
}

}  // namespace otsforge
