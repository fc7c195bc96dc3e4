#include "otsforge/treegen.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "otsforge/formula.hpp"

namespace otsforge {

void GenConfig::validate() const {
  if (node_min < 1 || node_max < node_min)
    throw Error(ErrorKind::invalid_argument,
                fmt::format("gen: invalid node_range [{}, {}]", node_min, node_max));
  if (n_vars < 1 || n_vars > 2)
    throw Error(ErrorKind::invalid_argument, "gen: n_vars must be 1 or 2");
  if (!(const_lo < const_hi))
    throw Error(ErrorKind::invalid_argument, "gen: const_range is empty");
  if (max_rejections < 1)
    throw Error(ErrorKind::invalid_argument, "gen: max_rejections must be >= 1");
  if (std::max(const_lo * const_lo, const_hi * const_hi) <
      min_linear_scale * min_linear_scale)
    throw Error(ErrorKind::invalid_argument,
                "gen: const_range cannot satisfy the L scale guard");
}

bool Skeleton::operator==(const Skeleton& other) const {
  if (nodes.size() != other.nodes.size()) return false;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].arity != other.nodes[i].arity ||
        nodes[i].children != other.nodes[i].children ||
        nodes[i].parent != other.nodes[i].parent)
      return false;
  return true;
}

namespace {

constexpr int kUnlimited = std::numeric_limits<int>::max();

int limit_of(const OperatorSpec& op) { return op.max_consecutive.value_or(kUnlimited); }

/// Re-lays a parent-linked shape in BFS order.
Skeleton to_bfs(const std::vector<SkeletonNode>& raw) {
  Skeleton out;
  std::vector<int> order{0};
  for (std::size_t h = 0; h < order.size(); ++h) {
    const auto& n = raw[static_cast<std::size_t>(order[h])];
    for (int k = 0; k < n.arity; ++k) order.push_back(n.children[k]);
  }
  std::vector<int> new_index(raw.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    new_index[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  out.nodes.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& src = raw[static_cast<std::size_t>(order[i])];
    auto& dst = out.nodes[i];
    dst.arity = src.arity;
    dst.parent = src.parent < 0 ? -1 : new_index[static_cast<std::size_t>(src.parent)];
    for (int k = 0; k < src.arity; ++k)
      dst.children[k] = new_index[static_cast<std::size_t>(src.children[k])];
  }
  return out;
}

}  // namespace

bool satisfies_constraints(const OpTree& tree, const Vocab& vocab) {
  std::map<TokenId, int> counts;
  std::vector<int> run(static_cast<std::size_t>(tree.size()), 0);
  std::vector<int> run_limit(static_cast<std::size_t>(tree.size()), kUnlimited);
  for (int i = 0; i < tree.size(); ++i) {
    const Node& n = tree.node(i);
    const OperatorSpec& op = vocab.lookup(n.token);
    const int count = ++counts[n.token];
    if (op.max_count && count > *op.max_count) return false;
    if (n.parent >= 0) {
      const Node& p = tree.node(n.parent);
      if (vocab.forbidden_pair(vocab.lookup(p.token), op)) return false;
      if (p.kind == OpKind::pow && p.children[1] == i && n.kind != OpKind::constant)
        return false;
    }
    if (n.arity == 1) {
      const bool chained = n.parent >= 0 && tree.node(n.parent).arity == 1;
      const auto pi = static_cast<std::size_t>(n.parent);
      run[static_cast<std::size_t>(i)] = (chained ? run[pi] : 0) + 1;
      run_limit[static_cast<std::size_t>(i)] =
          std::min(chained ? run_limit[pi] : kUnlimited, limit_of(op));
      if (run[static_cast<std::size_t>(i)] > run_limit[static_cast<std::size_t>(i)])
        return false;
    }
  }
  return true;
}

TreeGenerator::TreeGenerator(const Vocab& base, GenConfig cfg)
    : vocab_(base.with_overrides(cfg.overrides)), cfg_(std::move(cfg)) {
  cfg_.validate();
  global_max_consecutive_ = 0;
  for (const auto* op : vocab_.with_arity(1))
    global_max_consecutive_ = std::max(global_max_consecutive_, limit_of(*op));
}

std::optional<Skeleton> TreeGenerator::try_grow(int target, Rng& rng) const {
  struct Slot {
    int parent;
    int side;
    int unary_run;  // consecutive unary placeholders directly above
  };
  std::vector<SkeletonNode> raw;
  std::vector<Slot> open{{-1, 0, 0}};
  const bool have_unary = !vocab_.with_arity(1).empty();
  const bool have_binary = !vocab_.with_arity(2).empty();
  while (!open.empty()) {
    const auto pick = static_cast<std::size_t>(rng.below(open.size()));
    const Slot slot = open[pick];
    open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
    const int remaining_after = target - static_cast<int>(raw.size()) - 1;
    const int open_now = static_cast<int>(open.size());
    std::array<double, 3> w{};
    for (int arity = 0; arity <= 2; ++arity) {
      const int open_after = open_now + arity;
      bool ok = open_after <= remaining_after &&
                (remaining_after == 0 || open_after >= 1);
      if (arity == 1) ok = ok && have_unary && slot.unary_run + 1 <= global_max_consecutive_;
      if (arity == 2) ok = ok && have_binary;
      w[static_cast<std::size_t>(arity)] = ok ? cfg_.arity_weights[static_cast<std::size_t>(arity)] : 0.0;
    }
    const double total = w[0] + w[1] + w[2];
    if (!(total > 0.0)) return std::nullopt;
    double u = rng.uniform() * total;
    int arity = 0;
    for (; arity < 2; ++arity) {
      if (u < w[static_cast<std::size_t>(arity)]) break;
      u -= w[static_cast<std::size_t>(arity)];
    }
    while (w[static_cast<std::size_t>(arity)] == 0.0) --arity;
    const int index = static_cast<int>(raw.size());
    SkeletonNode node;
    node.arity = arity;
    node.parent = slot.parent;
    raw.push_back(node);
    if (slot.parent >= 0)
      raw[static_cast<std::size_t>(slot.parent)].children[static_cast<std::size_t>(slot.side)] = index;
    const int run = arity == 1 ? slot.unary_run + 1 : 0;
    for (int k = 0; k < arity; ++k) open.push_back({index, k, run});
  }
  if (static_cast<int>(raw.size()) != target) return std::nullopt;
  return to_bfs(raw);
}

Skeleton TreeGenerator::sample_skeleton(Rng& rng) const {
  const int span = cfg_.node_max - cfg_.node_min + 1;
  for (int attempt = 0; attempt < cfg_.max_rejections; ++attempt) {
    const int target = cfg_.node_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(span)));
    if (auto s = try_grow(target, rng)) return *s;
  }
  throw Error(ErrorKind::generation_exhausted,
              fmt::format("no skeleton within {} attempts", cfg_.max_rejections));
}

std::optional<OpTree> TreeGenerator::try_assign(const Skeleton& skeleton,
                                                Rng& rng) const {
  const auto n = skeleton.nodes.size();
  std::vector<const OperatorSpec*> chosen(n, nullptr);
  std::vector<int> run(n, 0), run_limit(n, kUnlimited);
  std::vector<bool> force_constant(n, false);
  std::map<TokenId, int> counts;
  const auto unary = vocab_.with_arity(1);
  const auto binary = vocab_.with_arity(2);
  auto leaves = vocab_.variables(cfg_.n_vars);
  const OperatorSpec* constant = nullptr;
  for (const auto& spec : vocab_.specs())
    if (spec.kind == OpKind::constant) constant = &spec;
  if (constant) leaves.push_back(constant);

  std::vector<const OperatorSpec*> options;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& sk = skeleton.nodes[i];
    const OperatorSpec* parent = sk.parent >= 0 ? chosen[static_cast<std::size_t>(sk.parent)] : nullptr;
    const bool chained = parent != nullptr && parent->arity == 1 && sk.arity == 1;
    options.clear();
    if (force_constant[i]) {
      options.push_back(constant);
    } else {
      const auto& pool = sk.arity == 0 ? leaves : (sk.arity == 1 ? unary : binary);
      for (const auto* op : pool) {
        if (op->max_count && counts[op->token_id] >= *op->max_count) continue;
        if (parent && vocab_.forbidden_pair(*parent, *op)) continue;
        if (sk.arity == 1) {
          const int r = (chained ? run[static_cast<std::size_t>(sk.parent)] : 0) + 1;
          const int lim = std::min(chained ? run_limit[static_cast<std::size_t>(sk.parent)] : kUnlimited,
                                   limit_of(*op));
          if (r > lim) continue;
        }
        if (op->kind == OpKind::pow &&
            (constant == nullptr ||
             skeleton.nodes[static_cast<std::size_t>(sk.children[1])].arity != 0))
          continue;
        options.push_back(op);
      }
    }
    if (options.empty()) return std::nullopt;
    const OperatorSpec* op = options[static_cast<std::size_t>(rng.below(options.size()))];
    if (parent && vocab_.forbidden_pair(*parent, *op)) return std::nullopt;
    chosen[i] = op;
    ++counts[op->token_id];
    if (sk.arity == 1) {
      run[i] = (chained ? run[static_cast<std::size_t>(sk.parent)] : 0) + 1;
      run_limit[i] = std::min(chained ? run_limit[static_cast<std::size_t>(sk.parent)] : kUnlimited,
                              limit_of(*op));
    }
    if (op->kind == OpKind::pow) force_constant[static_cast<std::size_t>(sk.children[1])] = true;
  }

  // At least one variable leaf: promote a free leaf when the draw produced none.
  const bool has_var = std::any_of(chosen.begin(), chosen.end(), [](const auto* op) {
    return op->kind == OpKind::variable;
  });
  if (!has_var) {
    std::vector<std::size_t> free_leaves;
    for (std::size_t i = 0; i < n; ++i)
      if (skeleton.nodes[i].arity == 0 && !force_constant[i]) free_leaves.push_back(i);
    const auto vars = vocab_.variables(cfg_.n_vars);
    if (free_leaves.empty() || vars.empty()) return std::nullopt;
    const auto leaf = free_leaves[static_cast<std::size_t>(rng.below(free_leaves.size()))];
    chosen[leaf] = vars[static_cast<std::size_t>(rng.below(vars.size()))];
  }

  std::vector<TreeSpec> specs(n);
  for (std::size_t i = n; i-- > 0;) {
    specs[i].token = chosen[i]->token_id;
    for (int k = 0; k < skeleton.nodes[i].arity; ++k)
      specs[i].children.push_back(std::move(specs[static_cast<std::size_t>(skeleton.nodes[i].children[k])]));
  }
  OpTree tree = OpTree::build(specs[0], vocab_);
  if (!satisfies_constraints(tree, vocab_)) return std::nullopt;
  return tree;
}

OpTree TreeGenerator::assign_symbols(const Skeleton& skeleton, Rng& rng) const {
  for (int attempt = 0; attempt < cfg_.max_rejections; ++attempt)
    if (auto tree = try_assign(skeleton, rng)) return std::move(*tree);
  throw Error(ErrorKind::generation_exhausted,
              fmt::format("no symbol assignment for a {}-node skeleton within {} attempts",
                          skeleton.node_count(), cfg_.max_rejections));
}

ConstArray TreeGenerator::sample_constants(const OpTree& tree, Rng& rng) const {
  ConstArray out;
  out.reserve(static_cast<std::size_t>(tree.n_constants()));
  for (const auto& n : tree.nodes()) {
    for (int k = 0; k < n.n_constants; ++k) {
      double v = rng.uniform(cfg_.const_lo, cfg_.const_hi);
      if (n.kind == OpKind::linear && k == 0)
        while (std::fabs(v) < cfg_.min_linear_scale) v = rng.uniform(cfg_.const_lo, cfg_.const_hi);
      out.push_back(v);
    }
  }
  return out;
}

OpTree TreeGenerator::generate_valid_tree(Rng& rng, const RenderConfig& render_cfg) const {
  for (int attempt = 0; attempt < cfg_.max_rejections; ++attempt) {
    const Skeleton skeleton = sample_skeleton(rng);
    OpTree tree = assign_symbols(skeleton, rng);
    tree.set_constants(sample_constants(tree, rng));
    if (is_constant_formula(tree)) continue;
    try {
      (void)render(tree, render_cfg);
    } catch (const RationalityError&) {
      continue;
    }
    return tree;
  }
  throw Error(ErrorKind::generation_exhausted,
              fmt::format("no rational tree within {} attempts", cfg_.max_rejections));
}

}  // namespace otsforge
