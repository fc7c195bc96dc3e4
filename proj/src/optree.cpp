#include "otsforge/optree.hpp"

#include <cctype>
#include <charconv>
#include <deque>
#include <sstream>

#include <fmt/format.h>

namespace otsforge {

class TreeLayout {
 public:
  static OpTree from_spec(const TreeSpec& root, const Vocab& vocab) {
    OpTree tree;
    std::deque<std::pair<const TreeSpec*, std::int32_t>> queue{{&root, -1}};
    while (!queue.empty()) {
      auto [spec, parent] = queue.front();
      queue.pop_front();
      const OperatorSpec& op = vocab.lookup(spec->token);
      if (static_cast<int>(spec->children.size()) != op.arity)
        throw Error(ErrorKind::invalid_argument,
                    fmt::format("'{}' expects {} children, got {}", op.name,
                                op.arity, spec->children.size()));
      Node node = make_node(op);
      node.parent = parent;
      node.const_offset = static_cast<std::uint32_t>(tree.constants_.size());
      if (spec->constants.empty()) {
        append_defaults(op, tree.constants_);
      } else if (static_cast<int>(spec->constants.size()) == op.n_constants) {
        tree.constants_.insert(tree.constants_.end(), spec->constants.begin(),
                               spec->constants.end());
      } else {
        throw Error(ErrorKind::invalid_argument,
                    fmt::format("'{}' carries {} constants, got {}", op.name,
                                op.n_constants, spec->constants.size()));
      }
      const auto index = static_cast<std::int32_t>(tree.nodes_.size());
      if (parent >= 0) {
        auto& p = tree.nodes_[static_cast<std::size_t>(parent)];
        p.children[p.children[0] < 0 ? 0 : 1] = index;
      }
      tree.nodes_.push_back(node);
      for (const auto& child : spec->children) queue.emplace_back(&child, index);
    }
    return tree;
  }

  static Node make_node(const OperatorSpec& op) {
    Node node;
    node.token = op.token_id;
    node.kind = op.kind;
    node.arity = static_cast<std::uint8_t>(op.arity);
    node.var_index = static_cast<std::int8_t>(op.var_index);
    node.n_constants = static_cast<std::uint8_t>(op.n_constants);
    return node;
  }

  static void append_defaults(const OperatorSpec& op, std::vector<double>& out) {
    if (op.kind == OpKind::linear) {
      out.push_back(1.0);
      out.push_back(0.0);
    } else {
      out.insert(out.end(), static_cast<std::size_t>(op.n_constants), 0.0);
    }
  }

  static OpTree from_parts(std::vector<Node> nodes, std::vector<double> consts) {
    OpTree tree;
    tree.nodes_ = std::move(nodes);
    tree.constants_ = std::move(consts);
    return tree;
  }
};

std::span<const double> OpTree::node_constants(int i) const {
  const Node& n = node(i);
  return std::span<const double>(constants_).subspan(n.const_offset,
                                                     n.n_constants);
}

void OpTree::set_constants(std::span<const double> values) {
  if (values.size() != constants_.size())
    throw Error(ErrorKind::invalid_argument,
                fmt::format("tree has {} constant slots, got {}",
                            constants_.size(), values.size()));
  std::copy(values.begin(), values.end(), constants_.begin());
}

OpTree OpTree::with_constants(std::span<const double> values) const {
  OpTree copy = *this;
  copy.set_constants(values);
  return copy;
}

int OpTree::max_var_index() const {
  int best = -1;
  for (const auto& n : nodes_)
    if (n.kind == OpKind::variable) best = std::max(best, int{n.var_index});
  return best;
}

TreeSpec OpTree::to_spec(int root) const {
  TreeSpec spec;
  const Node& n = node(root);
  spec.token = n.token;
  auto c = node_constants(root);
  spec.constants.assign(c.begin(), c.end());
  for (int k = 0; k < n.arity; ++k) spec.children.push_back(to_spec(n.children[k]));
  return spec;
}

OpTree OpTree::build(const TreeSpec& spec, const Vocab& vocab) {
  return TreeLayout::from_spec(spec, vocab);
}

// ---------------------------------------------------------------- prefix text

namespace {

class PrefixParser {
 public:
  PrefixParser(std::string_view text, const Vocab& vocab)
      : text_(text), vocab_(vocab) {}

  TreeSpec parse() {
    TreeSpec spec = node();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters");
    return spec;
  }

 private:
  TreeSpec node() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_'))
      ++pos_;
    if (start == pos_) fail("expected a symbol name");
    const std::string_view name = text_.substr(start, pos_ - start);
    const OperatorSpec& op = vocab_.lookup(name);
    TreeSpec spec;
    spec.token = op.token_id;
    skip_ws();
    if (peek('[')) {
      ++pos_;
      while (true) {
        skip_ws();
        spec.constants.push_back(number());
        skip_ws();
        if (peek(',')) { ++pos_; continue; }
        expect(']');
        break;
      }
    }
    skip_ws();
    if (op.arity > 0) {
      expect('(');
      for (int k = 0; k < op.arity; ++k) {
        if (k > 0) { skip_ws(); expect(','); }
        spec.children.push_back(node());
      }
      skip_ws();
      expect(')');
    }
    return spec;
  }

  double number() {
    double value = 0;
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc()) fail("expected a number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }
  bool peek(char c) const { return pos_ < text_.size() && text_[pos_] == c; }
  void expect(char c) {
    if (!peek(c)) fail(fmt::format("expected '{}'", c));
    ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("tree text at offset {}: {}", pos_, what));
  }

  std::string_view text_;
  const Vocab& vocab_;
  std::size_t pos_ = 0;
};

void prefix_into(const OpTree& tree, const Vocab& vocab, int i,
                 std::string& out) {
  const Node& n = tree.node(i);
  out += vocab.lookup(n.token).name;
  auto c = tree.node_constants(i);
  if (!c.empty()) {
    out += '[';
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (k) out += ',';
      out += fmt::format("{}", c[k]);
    }
    out += ']';
  }
  if (n.arity > 0) {
    out += '(';
    for (int k = 0; k < n.arity; ++k) {
      if (k) out += ',';
      prefix_into(tree, vocab, n.children[k], out);
    }
    out += ')';
  }
}

}  // namespace

OpTree parse_tree(std::string_view text, const Vocab& vocab) {
  return OpTree::build(PrefixParser(text, vocab).parse(), vocab);
}

std::string to_prefix(const OpTree& tree, const Vocab& vocab) {
  std::string out;
  if (!tree.empty()) prefix_into(tree, vocab, 0, out);
  return out;
}

// ---------------------------------------------------------------- BFS codec

Encoded encode_bfs(const OpTree& tree) {
  Encoded out;
  if (tree.empty()) return out;
  out.constants.assign(tree.constants().begin(), tree.constants().end());
  std::vector<std::int32_t> level{0};
  out.ots.push_back(tree.node(0).token);
  while (!level.empty()) {
    std::vector<std::int32_t> next;
    for (auto index : level) {
      const Node& n = tree.node(index);
      for (int slot = 0; slot < 2; ++slot) {
        if (slot < n.arity) {
          const auto child = n.children[slot];
          out.ots.push_back(tree.node(child).token);
          next.push_back(child);
        } else {
          out.ots.push_back(kEndToken);
        }
      }
    }
    level = std::move(next);
  }
  return out;
}

namespace {

DecodeResult failure(ReconstructionReason reason, std::string detail) {
  DecodeResult r;
  r.reason = reason;
  r.detail = std::move(detail);
  return r;
}

}  // namespace

DecodeResult try_decode_bfs(std::span<const TokenId> ots,
                            std::optional<std::span<const double>> consts,
                            const Vocab& vocab) {
  if (ots.empty() || ots[0] == kEndToken)
    return failure(ReconstructionReason::empty_sequence, "no root token");
  for (std::size_t k = 0; k < ots.size(); ++k)
    if (ots[k] != kEndToken && !vocab.is_operator(ots[k]))
      return failure(ReconstructionReason::unknown_token,
                     fmt::format("token {} at position {}", ots[k], k));

  std::vector<Node> nodes;
  auto push = [&](TokenId tok, std::int32_t parent) -> const OperatorSpec* {
    const OperatorSpec* op = vocab.find(tok);
    if (op == nullptr) return nullptr;
    Node n = TreeLayout::make_node(*op);
    n.parent = parent;
    if (parent >= 0) {
      auto& p = nodes[static_cast<std::size_t>(parent)];
      p.children[p.children[0] < 0 ? 0 : 1] = static_cast<std::int32_t>(nodes.size());
    }
    nodes.push_back(n);
    return op;
  };

  if (push(ots[0], -1) == nullptr)
    return failure(ReconstructionReason::unknown_token,
                   fmt::format("token {} at position 0", ots[0]));

  std::size_t pos = 1;
  std::size_t level_begin = 0, level_end = 1;
  while (level_begin < level_end) {
    bool needs_real = false;
    for (std::size_t i = level_begin; i < level_end; ++i)
      needs_real = needs_real || nodes[i].arity > 0;
    for (std::size_t i = level_begin; i < level_end; ++i) {
      const int arity = nodes[i].arity;
      for (int slot = 0; slot < 2; ++slot) {
        if (pos >= ots.size()) {
          // The closing all-'end' level may be omitted.
          if (!needs_real) goto structure_done;
          return failure(ReconstructionReason::truncated,
                         fmt::format("sequence ends inside level at position {}",
                                     pos));
        }
        const TokenId tok = ots[pos];
        if (slot < arity) {
          if (tok == kEndToken)
            return failure(ReconstructionReason::slot_mismatch,
                           fmt::format("'end' at position {} where operand {} "
                                       "of node {} is required",
                                       pos, slot, i));
          if (push(tok, static_cast<std::int32_t>(i)) == nullptr)
            return failure(ReconstructionReason::unknown_token,
                           fmt::format("token {} at position {}", tok, pos));
        } else if (tok != kEndToken) {
          return failure(ReconstructionReason::slot_mismatch,
                         fmt::format("token {} at position {} fills an 'end' slot",
                                     tok, pos));
        }
        ++pos;
      }
    }
    level_begin = level_end;
    level_end = nodes.size();
  }
structure_done:
  for (; pos < ots.size(); ++pos)
    if (ots[pos] != kEndToken)
      return failure(ReconstructionReason::trailing_tokens,
                     fmt::format("token {} at position {} after the last level",
                                 ots[pos], pos));

  std::size_t n_slots = 0;
  for (auto& n : nodes) {
    n.const_offset = static_cast<std::uint32_t>(n_slots);
    n_slots += n.n_constants;
  }
  std::vector<double> values;
  if (consts) {
    if (consts->size() != n_slots)
      return failure(ReconstructionReason::constant_count_mismatch,
                     fmt::format("tree has {} constant slots, got {}", n_slots,
                                 consts->size()));
    values.assign(consts->begin(), consts->end());
  } else {
    values.assign(n_slots, 0.0);
  }
  DecodeResult ok;
  ok.tree = TreeLayout::from_parts(std::move(nodes), std::move(values));
  return ok;
}

OpTree decode_bfs(std::span<const TokenId> ots, std::span<const double> consts,
                  const Vocab& vocab) {
  auto r = try_decode_bfs(ots, consts, vocab);
  if (!r.ok()) throw ReconstructionError(r.reason, r.detail);
  return std::move(*r.tree);
}

bool is_reconstructable(std::span<const TokenId> ots, const Vocab& vocab) {
  return try_decode_bfs(ots, std::nullopt, vocab).ok();
}

std::optional<int> constant_slots(std::span<const TokenId> ots,
                                  const Vocab& vocab) {
  auto r = try_decode_bfs(ots, std::nullopt, vocab);
  if (!r.ok()) return std::nullopt;
  return r.tree->n_constants();
}

std::span<const TokenId> strip_trailing_end(std::span<const TokenId> ots) {
  std::size_t n = ots.size();
  while (n > 0 && ots[n - 1] == kEndToken) --n;
  return ots.first(n);
}

std::string format_ots(std::span<const TokenId> ots) {
  return fmt::format("{}", fmt::join(ots, ","));
}

namespace {

template <typename T>
std::vector<T> parse_list(std::string_view text, const char* what) {
  std::vector<T> out;
  std::size_t pos = 0;
  auto skip = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
  };
  skip();
  if (pos == text.size()) return out;
  while (true) {
    skip();
    T value{};
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), value);
    if (ec != std::errc())
      throw Error(ErrorKind::invalid_argument,
                  fmt::format("malformed {} list '{}'", what, text));
    pos = static_cast<std::size_t>(ptr - text.data());
    out.push_back(value);
    skip();
    if (pos == text.size()) break;
    if (text[pos] != ',')
      throw Error(ErrorKind::invalid_argument,
                  fmt::format("malformed {} list '{}'", what, text));
    ++pos;
  }
  return out;
}

}  // namespace

Ots parse_ots(std::string_view text) { return parse_list<TokenId>(text, "OTS"); }

std::string format_constants(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += fmt::format("{:.9g}", values[i]);
  }
  return out;
}

ConstArray parse_constants(std::string_view text) {
  return parse_list<double>(text, "constants");
}

std::vector<std::string> token_names(std::span<const TokenId> ots,
                                     const Vocab& vocab) {
  std::vector<std::string> names;
  names.reserve(ots.size());
  for (auto tok : ots) {
    if (tok == kEndToken) {
      names.emplace_back("end");
    } else if (const auto* op = vocab.find(tok)) {
      names.push_back(op->name);
    } else {
      names.push_back(std::to_string(tok));
    }
  }
  return names;
}

}  // namespace otsforge
