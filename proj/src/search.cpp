#include "otsforge/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "otsforge/csv.hpp"
#include "otsforge/formula.hpp"
#include "otsforge/treegen.hpp"

namespace otsforge {

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::enumerate: return "enumerate";
    case SourceKind::file: return "file";
    case SourceKind::model: return "model";
  }
  return "?";
}

SourceKind source_kind_from_string(std::string_view name) {
  if (name == "enumerate") return SourceKind::enumerate;
  if (name == "file") return SourceKind::file;
  if (name == "model") return SourceKind::model;
  throw Error(ErrorKind::invalid_argument, fmt::format("unknown candidate source '{}'", name));
}

void CandidateSource::validate() const {
  if (budget < 1) throw Error(ErrorKind::invalid_argument, "source: budget must be >= 1");
  if (kind == SourceKind::enumerate) {
    if (node_budget < 1 || node_budget > kMaxEnumerationBudget)
      throw Error(ErrorKind::invalid_argument,
                  fmt::format("source: node_budget must be in [1, {}]", kMaxEnumerationBudget));
    if (n_vars < 1 || n_vars > 2)
      throw Error(ErrorKind::invalid_argument, "source: n_vars must be 1 or 2");
  } else if (path.empty()) {
    throw Error(ErrorKind::invalid_argument, "source: a path is required");
  }
}

// ------------------------------------------------------------ enumeration

namespace {

using Prefix = std::vector<TokenId>;

TreeSpec spec_from_prefix(const Prefix& p, std::size_t& pos, const Vocab& vocab) {
  const OperatorSpec& op = vocab.lookup(p[pos++]);
  TreeSpec s{op.token_id, {}, {}};
  for (int c = 0; c < op.arity; ++c) s.children.push_back(spec_from_prefix(p, pos, vocab));
  return s;
}

OpTree tree_from_prefix(const Prefix& p, const Vocab& vocab) {
  std::size_t pos = 0;
  return OpTree::build(spec_from_prefix(p, pos, vocab), vocab);
}

}  // namespace

std::vector<Ots> enumerate_candidates(int node_budget, const Vocab& vocab, int limit,
                                      int n_vars) {
  CandidateSource probe;
  probe.node_budget = node_budget;
  probe.n_vars = n_vars;
  probe.budget = limit;
  probe.validate();

  std::vector<const OperatorSpec*> leaves = vocab.variables(n_vars);
  for (const auto& op : vocab.specs())
    if (op.kind == OpKind::constant) leaves.push_back(&op);
  const auto unary = vocab.with_arity(1);
  const auto binary = vocab.with_arity(2);
  TokenId const_leaf = -1;
  for (const auto* op : leaves)
    if (op->kind == OpKind::constant) const_leaf = op->token_id;

  // valid[n]: prefix forms of every constraint-satisfying tree of n nodes.
  std::vector<std::vector<Prefix>> valid(static_cast<std::size_t>(node_budget) + 1);
  std::vector<Ots> out;
  const auto cap = static_cast<std::size_t>(limit);
  for (int n = 1; n <= node_budget && out.size() < cap; ++n) {
    std::vector<Prefix> level;
    auto keep = [&](Prefix p) {
      if (satisfies_constraints(tree_from_prefix(p, vocab), vocab)) level.push_back(std::move(p));
    };
    if (n == 1) {
      for (const auto* op : leaves) keep({op->token_id});
    } else {
      for (const auto* op : unary)
        for (const auto& c : valid[static_cast<std::size_t>(n - 1)]) {
          Prefix p{op->token_id};
          p.insert(p.end(), c.begin(), c.end());
          keep(std::move(p));
        }
      for (const auto* op : binary)
        for (int left = 1; left <= n - 2; ++left) {
          const int right = n - 1 - left;
          if (op->kind == OpKind::pow && (right != 1 || const_leaf < 0)) continue;
          for (const auto& l : valid[static_cast<std::size_t>(left)])
            for (const auto& r : valid[static_cast<std::size_t>(right)]) {
              if (op->kind == OpKind::pow && r[0] != const_leaf) continue;
              Prefix p{op->token_id};
              p.insert(p.end(), l.begin(), l.end());
              p.insert(p.end(), r.begin(), r.end());
              keep(std::move(p));
            }
        }
    }
    std::vector<Ots> encoded;
    encoded.reserve(level.size());
    for (const auto& p : level) encoded.push_back(encode_bfs(tree_from_prefix(p, vocab)).ots);
    std::sort(encoded.begin(), encoded.end());
    for (auto& o : encoded) {
      if (out.size() >= cap) break;
      out.push_back(std::move(o));
    }
    valid[static_cast<std::size_t>(n)] = std::move(level);
  }
  return out;
}

std::vector<Ots> load_candidates(const CandidateSource& source, const Vocab& vocab) {
  source.validate();
  if (source.kind == SourceKind::enumerate)
    return enumerate_candidates(source.node_budget, vocab, source.budget, source.n_vars);

  std::vector<Ots> out;
  const auto cap = static_cast<std::size_t>(source.budget);
  if (source.kind == SourceKind::file) {
    std::ifstream in(source.path);
    if (!in) throw Error(ErrorKind::io, fmt::format("cannot open '{}'", source.path.string()));
    std::string line;
    while (out.size() < cap && std::getline(in, line)) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      out.push_back(parse_ots(line));
    }
    return out;
  }

  const csv::Table table = csv::Table::read_file(source.path.string());
  table.require({"pair_id", "rank", "ots"});
  struct Row {
    long rank;
    std::size_t index;
    Ots ots;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < table.rows().size(); ++i) {
    if (source.pair_id && table.at(i, "pair_id") != *source.pair_id) continue;
    const std::string& rank = table.at(i, "rank");
    char* end = nullptr;
    const long r = std::strtol(rank.c_str(), &end, 10);
    if (rank.empty() || *end != '\0')
      throw Error(ErrorKind::schema_mismatch,
                  fmt::format("candidates: row {} has non-integer rank '{}'", i + 2, rank));
    rows.push_back({r, i, parse_ots(table.at(i, "ots"))});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.rank < b.rank; });
  for (auto& r : rows) {
    if (out.size() >= cap) break;
    out.push_back(std::move(r.ots));
  }
  return out;
}

// ------------------------------------------------------------ solve

FitConfig SolveConfig::default_coarse() {
  FitConfig c;
  c.restarts = 1;
  c.screen_samples = 64;
  c.max_iters = 30;
  c.stop_delta = 1e-7;
  return c;
}

void SolveConfig::validate() const {
  if (k < 1) throw Error(ErrorKind::invalid_argument, "solve: k must be >= 1");
  if (!(tie_floor >= 0)) throw Error(ErrorKind::invalid_argument, "solve: tie_floor must be >= 0");
  if (!(min_mask_agreement >= 0 && min_mask_agreement <= 1))
    throw Error(ErrorKind::invalid_argument, "solve: min_mask_agreement must be in [0, 1]");
  fit.validate();
  coarse.validate();
}

namespace {

enum class Outcome { ok, reconstruction, fit_failed, irrational, mask_mismatch };

struct Slot {
  Outcome outcome = Outcome::fit_failed;
  std::optional<OpTree> tree;
  FitResult fit;
  double agreement = -1.0;
};

RenderConfig render_config_of(const FuncImg& target) {
  RenderConfig rc;
  rc.scales = target.scales;
  rc.resolution = target.resolution;
  rc.n_vars = target.n_vars;
  return rc;
}

// Fraction of entries where the candidate is finite exactly when the target
// is; -1 when the candidate fails the rationality check.
double mask_agreement(const OpTree& tree, const FuncImg& target, const RenderConfig& rc) {
  try {
    const FuncImg img = render(tree, rc);
    std::size_t same = 0;
    for (std::size_t i = 0; i < img.mask.size(); ++i) same += (img.mask[i] != 0) == (target.mask[i] != 0);
    return static_cast<double>(same) / static_cast<double>(img.mask.size());
  } catch (const RationalityError&) {
    return -1.0;
  }
}

void fit_slot(Slot& slot, const FuncImg& target, const FitConfig& cfg) {
  try {
    FitResult r = fit_tree(*slot.tree, target, cfg);
    if (slot.outcome != Outcome::ok || r.final_mse < slot.fit.final_mse) slot.fit = std::move(r);
    slot.outcome = Outcome::ok;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::no_finite_points && e.kind() != ErrorKind::invalid_argument) throw;
  }
}

}  // namespace

SolveResult solve(const FuncImg& target, std::span<const Ots> candidates,
                  const SolveConfig& cfg, const Vocab& vocab) {
  cfg.validate();
  if (candidates.empty()) throw Error(ErrorKind::no_candidates, "solve: candidate source is empty");
  const RenderConfig rc = render_config_of(target);

  std::vector<Slot> slots(candidates.size());
  const auto n = static_cast<std::ptrdiff_t>(candidates.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    Slot& s = slots[static_cast<std::size_t>(i)];
    auto decoded = try_decode_bfs(candidates[static_cast<std::size_t>(i)], std::nullopt, vocab);
    if (!decoded.ok() || decoded.tree->max_var_index() >= target.n_vars) {
      s.outcome = Outcome::reconstruction;
      continue;
    }
    s.tree = std::move(decoded.tree);
    fit_slot(s, target, cfg.coarse);
    if (s.outcome == Outcome::ok)
      s.agreement = mask_agreement(s.tree->with_constants(s.fit.constants), target, rc);
  }

  // Refine the best coarse fits that have constants: the leading mask-consistent
  // ones and, separately, the leading rest, since a coarse fit with the right
  // skeleton can still miss the target's domain.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (slots[i].outcome == Outcome::ok && slots[i].tree->n_constants() > 0) order.push_back(i);
  auto tier = [&](std::size_t i) {
    return slots[i].agreement >= cfg.min_mask_agreement ? 0 : slots[i].agreement >= 0 ? 1 : 2;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (tier(a) != tier(b)) return tier(a) < tier(b);
    return slots[a].fit.final_mse < slots[b].fit.final_mse;
  });
  std::vector<std::size_t> chosen;
  const auto first_rest = static_cast<std::size_t>(
      std::find_if(order.begin(), order.end(), [&](std::size_t i) { return tier(i) > 0; }) -
      order.begin());
  const std::size_t per_group =
      cfg.refine_top < 0 ? order.size() : static_cast<std::size_t>(cfg.refine_top);
  for (std::size_t j = 0; j < std::min(first_rest, per_group); ++j) chosen.push_back(order[j]);
  for (std::size_t j = first_rest; j < std::min(order.size(), first_rest + per_group); ++j)
    chosen.push_back(order[j]);
  const std::size_t refine = chosen.size();
  const auto nr = static_cast<std::ptrdiff_t>(refine);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t j = 0; j < nr; ++j) {
    Slot& s = slots[chosen[static_cast<std::size_t>(j)]];
    fit_slot(s, target, cfg.fit);
    s.agreement = mask_agreement(s.tree->with_constants(s.fit.constants), target, rc);
  }

  SolveDiagnostics diag;
  diag.candidates = candidates.size();
  diag.refined = refine;
  std::vector<std::size_t> alive;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Slot& s = slots[i];
    if (s.outcome == Outcome::ok) {
      ++diag.fitted;
      if (s.agreement < 0)
        s.outcome = Outcome::irrational;
      else if (s.agreement < cfg.min_mask_agreement)
        s.outcome = Outcome::mask_mismatch;
    }
    switch (s.outcome) {
      case Outcome::ok: alive.push_back(i); break;
      case Outcome::reconstruction: ++diag.reconstruction_failed; break;
      case Outcome::fit_failed: ++diag.fit_failed; break;
      case Outcome::irrational: ++diag.irrational; break;
      case Outcome::mask_mismatch: ++diag.mask_mismatch; break;
    }
  }
  spdlog::debug("solve: {} candidates, {} fitted, {} refined, {} ranked", diag.candidates,
                diag.fitted, diag.refined, alive.size());
  if (alive.empty())
    throw Error(ErrorKind::no_candidates, "solve: every candidate failed reconstruction or fitting");

  auto key = [&](std::size_t i) { return std::max(slots[i].fit.final_mse, cfg.tie_floor); };
  auto stripped = [&](std::size_t i) { return strip_trailing_end(candidates[i]); };
  std::sort(alive.begin(), alive.end(), [&](std::size_t a, std::size_t b) {
    if (key(a) != key(b)) return key(a) < key(b);
    const auto sa = stripped(a), sb = stripped(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    return std::lexicographical_compare(sa.begin(), sa.end(), sb.begin(), sb.end());
  });

  SolveResult out;
  out.diagnostics = diag;
  const std::size_t keep = std::min(alive.size(), static_cast<std::size_t>(cfg.k));
  for (std::size_t r = 0; r < keep; ++r) {
    Slot& s = slots[alive[r]];
    Solution sol;
    sol.ots = candidates[alive[r]];
    sol.formula = render_formula(s.tree->with_constants(s.fit.constants));
    sol.fit = std::move(s.fit);
    sol.rank = static_cast<int>(r) + 1;
    out.solutions.push_back(std::move(sol));
  }
  return out;
}

SolveResult solve(const FuncImg& target, const CandidateSource& source, const SolveConfig& cfg,
                  const Vocab& vocab) {
  const auto candidates = load_candidates(source, vocab);
  return solve(target, candidates, cfg, vocab);
}

}  // namespace otsforge
