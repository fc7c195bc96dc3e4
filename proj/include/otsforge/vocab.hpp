#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace otsforge {

using TokenId = std::int32_t;

inline constexpr TokenId kEndToken = 0;

/// Numeric semantics of an operator. Token ids are a property of the vocab
/// table, the kind is what the evaluator dispatches on.
enum class OpKind : std::uint8_t {
  add,
  sub,
  mul,
  div,
  pow,
  neg,
  inv,
  sin,
  cos,
  tan,
  exp,
  log,
  sqrt,
  abs,
  linear,  // a*child + b
  constant,
  variable,
};

/// One admissible piece of an argument's domain.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = true;
  bool hi_open = true;

  [[nodiscard]] bool contains(double x) const {
    return (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
  }
};

struct OperatorSpec {
  std::string name;
  TokenId token_id = 0;
  int arity = 0;
  int n_constants = 0;
  OpKind kind = OpKind::constant;
  int var_index = -1;  // only for OpKind::variable
  /// domain[k] is the union of intervals admissible for argument k.
  std::vector<std::vector<Interval>> domain;
  std::optional<int> max_consecutive;
  std::set<std::string> forbidden_adjacent;
  std::optional<int> max_count;
};

/// Per-operator generation constraint override, as read from the `vocab:`
/// section of a dataset config.
struct ConstraintOverride {
  std::string name;
  std::optional<std::optional<int>> max_consecutive;
  std::optional<std::optional<int>> max_count;
  std::optional<std::set<std::string>> forbidden_adjacent;
};

class Vocab {
 public:
  using Key = std::variant<std::string_view, TokenId>;

  explicit Vocab(std::vector<OperatorSpec> specs);

  /// Number of operators; ids 1..size() are operators.
  [[nodiscard]] int size() const { return static_cast<int>(specs_.size()); }
  [[nodiscard]] TokenId end_id() const { return kEndToken; }
  [[nodiscard]] const std::vector<OperatorSpec>& specs() const { return specs_; }
  [[nodiscard]] const std::vector<std::string>& special_tokens() const {
    return special_tokens_;
  }
  /// Id of a special token such as "[BOS]".
  [[nodiscard]] TokenId special_id(std::string_view name) const;
  /// Size of the extended vocab {0, ..., N + N~}.
  [[nodiscard]] int extended_size() const {
    return size() + static_cast<int>(special_tokens_.size()) + 1;
  }

  /// Throws UnknownSymbol / NotAnOperator.
  [[nodiscard]] const OperatorSpec& lookup(Key key) const;
  [[nodiscard]] const OperatorSpec* find(std::string_view name) const;
  [[nodiscard]] const OperatorSpec* find(TokenId id) const;
  [[nodiscard]] bool is_operator(TokenId id) const {
    return id >= 1 && id <= size();
  }

  [[nodiscard]] std::vector<const OperatorSpec*> with_arity(int arity) const;
  /// Leaf variables x0..x(n_vars-1).
  [[nodiscard]] std::vector<const OperatorSpec*> variables(int n_vars) const;

  /// True when a and b may not appear as a direct parent/child pair.
  [[nodiscard]] bool forbidden_pair(const OperatorSpec& a,
                                    const OperatorSpec& b) const;

  [[nodiscard]] Vocab with_overrides(
      const std::vector<ConstraintOverride>& overrides) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& doc);

 private:
  std::vector<OperatorSpec> specs_;  // specs_[id - 1]
  std::vector<std::string> special_tokens_;
};

/// The canonical 18-operator table plus the six special tokens.
Vocab build_default_vocab();

/// Shared immutable instance of build_default_vocab().
const Vocab& default_vocab();

}  // namespace otsforge
