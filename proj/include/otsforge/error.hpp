#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace otsforge {

enum class ErrorKind {
  unknown_symbol,
  not_an_operator,
  reconstruction,
  no_finite_points,
  generation_exhausted,
  rationality,
  io,
  corrupt_shard,
  schema_mismatch,
  degenerate_target,
  no_candidates,
  invalid_argument,
};

std::string_view to_string(ErrorKind kind);

/// Base class of every domain error raised by the library. The CLI maps these
/// to exit status 1 and prints `{"error": kind, "message": ...}` on stderr.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

enum class ReconstructionReason {
  empty_sequence,
  unknown_token,
  slot_mismatch,
  truncated,
  trailing_tokens,
  constant_count_mismatch,
};

std::string_view to_string(ReconstructionReason reason);

class ReconstructionError : public Error {
 public:
  ReconstructionError(ReconstructionReason reason, const std::string& detail)
      : Error(ErrorKind::reconstruction,
              std::string(to_string(reason)) + ": " + detail),
        reason_(reason) {}

  [[nodiscard]] ReconstructionReason reason() const noexcept { return reason_; }

 private:
  ReconstructionReason reason_;
};

enum class RationalityReason { constant, insufficient_domain };

class RationalityError : public Error {
 public:
  explicit RationalityError(RationalityReason reason)
      : Error(ErrorKind::rationality, reason == RationalityReason::constant
                                          ? "constant"
                                          : "insufficient_domain"),
        reason_(reason) {}

  [[nodiscard]] RationalityReason reason() const noexcept { return reason_; }

 private:
  RationalityReason reason_;
};

}  // namespace otsforge
