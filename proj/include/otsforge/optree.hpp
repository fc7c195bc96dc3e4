#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otsforge/error.hpp"
#include "otsforge/vocab.hpp"

namespace otsforge {

/// Operation tree sequence: operator ids with 0 as the 'end' filler.
using Ots = std::vector<TokenId>;
/// Per-node constants concatenated in BFS node order.
using ConstArray = std::vector<double>;

struct Node {
  TokenId token = 0;
  OpKind kind = OpKind::constant;
  std::uint8_t arity = 0;
  std::int8_t var_index = -1;
  std::uint8_t n_constants = 0;
  std::array<std::int32_t, 2> children{-1, -1};
  std::int32_t parent = -1;
  std::uint32_t const_offset = 0;

  bool operator==(const Node&) const = default;
};

/// Nested, order-free description of a tree; OpTree::build lays it out.
struct TreeSpec {
  TokenId token = 0;
  std::vector<double> constants;  // empty = operator defaults
  std::vector<TreeSpec> children;
};

/// An operation tree stored in breadth-first order: node 0 is the root and
/// every child index is larger than its parent's. This layout makes the BFS
/// node order the storage order, so the tree's ConstArray is simply the
/// concatenation of node constants.
class OpTree {
 public:
  OpTree() = default;

  /// Validates arity and constant counts; fills default constants
  /// (C = 0, L = (1, 0)) where the spec leaves them empty.
  static OpTree build(const TreeSpec& spec, const Vocab& vocab);

  [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }
  [[nodiscard]] const Node& node(int i) const {
    return nodes_[static_cast<std::size_t>(i)];
  }
  [[nodiscard]] int size() const { return static_cast<int>(nodes_.size()); }
  [[nodiscard]] bool empty() const { return nodes_.empty(); }

  [[nodiscard]] std::span<const double> constants() const { return constants_; }
  [[nodiscard]] std::span<const double> node_constants(int i) const;
  [[nodiscard]] int n_constants() const {
    return static_cast<int>(constants_.size());
  }
  /// Replaces the ConstArray; length must match.
  void set_constants(std::span<const double> values);
  [[nodiscard]] OpTree with_constants(std::span<const double> values) const;

  /// Largest variable index used, or -1 for variable-free trees.
  [[nodiscard]] int max_var_index() const;

  [[nodiscard]] TreeSpec to_spec(int root = 0) const;

  bool operator==(const OpTree&) const = default;

 private:
  friend class TreeLayout;
  std::vector<Node> nodes_;
  std::vector<double> constants_;
};

/// Builds a tree from the compact prefix notation used in tests and on the
/// command line: `name[c0,c1](child,child)`, e.g.
/// `L[-1.15,-1.13](div(x0,x1))` or `mul(x0,C[2.5])`.
OpTree parse_tree(std::string_view text, const Vocab& vocab);
/// Inverse of parse_tree, constants printed round-trip exact.
std::string to_prefix(const OpTree& tree, const Vocab& vocab);

struct Encoded {
  Ots ots;
  ConstArray constants;
};

/// Level-order encoding: every real node owns two slots in the next level
/// (binary: [left, right], unary: [child, end], leaf: [end, end]). Output
/// stops after the first all-'end' level.
Encoded encode_bfs(const OpTree& tree);

struct DecodeResult {
  std::optional<OpTree> tree;
  ReconstructionReason reason = ReconstructionReason::empty_sequence;
  std::string detail;

  [[nodiscard]] bool ok() const { return tree.has_value(); }
};

/// Total decoder: never throws, reports the first structural problem.
/// `consts` may be nullopt to zero-fill every constant slot.
DecodeResult try_decode_bfs(std::span<const TokenId> ots,
                            std::optional<std::span<const double>> consts,
                            const Vocab& vocab);

/// Throwing wrapper of try_decode_bfs.
OpTree decode_bfs(std::span<const TokenId> ots, std::span<const double> consts,
                  const Vocab& vocab);

bool is_reconstructable(std::span<const TokenId> ots, const Vocab& vocab);

/// Number of constant slots a structurally valid OTS requires.
std::optional<int> constant_slots(std::span<const TokenId> ots,
                                  const Vocab& vocab);

/// OTS without trailing 'end' tokens.
std::span<const TokenId> strip_trailing_end(std::span<const TokenId> ots);

std::string format_ots(std::span<const TokenId> ots);
Ots parse_ots(std::string_view text);
/// Nine significant digits, comma separated.
std::string format_constants(std::span<const double> values);
ConstArray parse_constants(std::string_view text);

/// Token names of an OTS, 'end' rendered as "end".
std::vector<std::string> token_names(std::span<const TokenId> ots,
                                     const Vocab& vocab);

}  // namespace otsforge
