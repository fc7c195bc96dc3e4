#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otsforge/fitter.hpp"
#include "otsforge/funcimg.hpp"
#include "otsforge/optree.hpp"
#include "otsforge/vocab.hpp"

namespace otsforge {

inline constexpr int kMaxEnumerationBudget = 7;
inline constexpr int kDefaultCandidateLimit = 50000;

enum class SourceKind { enumerate, file, model };

std::string_view to_string(SourceKind kind);
SourceKind source_kind_from_string(std::string_view name);

struct CandidateSource {
  SourceKind kind = SourceKind::enumerate;
  /// Maximum number of candidates taken from the source.
  int budget = kDefaultCandidateLimit;
  int node_budget = 5;
  int n_vars = 1;
  /// file: one comma-separated OTS per line. model: CSV with columns
  /// pair_id, rank, ots.
  std::filesystem::path path;
  /// model only: keep rows of this pair.
  std::optional<std::string> pair_id;

  void validate() const;
};

/// Every constraint-satisfying tree with at most `node_budget` nodes over
/// x0..x(n_vars-1), ordered by node count and then lexicographically by
/// OTS token ids, truncated to `limit`.
std::vector<Ots> enumerate_candidates(int node_budget, const Vocab& vocab, int limit,
                                      int n_vars = 1);

/// Reads the OTS list of a file/model source or enumerates.
std::vector<Ots> load_candidates(const CandidateSource& source, const Vocab& vocab);

struct Solution {
  Ots ots;
  FitResult fit;
  std::string formula;
  int rank = 0;
};

struct SolveDiagnostics {
  std::size_t candidates = 0;
  std::size_t fitted = 0;
  std::size_t reconstruction_failed = 0;
  std::size_t fit_failed = 0;
  /// Fitted trees whose rendering fails the rationality check.
  std::size_t irrational = 0;
  /// Finite where the target is masked out, or the reverse, too often.
  std::size_t mask_mismatch = 0;
  std::size_t refined = 0;
};

struct SolveConfig {
  int k = 10;
  /// Full fit used for the most promising candidates.
  FitConfig fit;
  /// Cheap first pass over every candidate.
  FitConfig coarse = default_coarse();
  /// Candidates refit with `fit` after the coarse pass, taken from the
  /// mask-consistent coarse fits and again from the rest; 0 refits none and
  /// negative refits all.
  int refine_top = 32;
  /// MSE values at or below this are ranked as equal.
  double tie_floor = 1e-12;
  /// Minimum fraction of entries whose finiteness matches the target mask.
  double min_mask_agreement = 0.99;

  static FitConfig default_coarse();
  void validate() const;
};

struct SolveResult {
  std::vector<Solution> solutions;
  SolveDiagnostics diagnostics;
};

/// Fits every candidate to the target and returns the best `k`, ranked by
/// final MSE, then shorter stripped OTS, then token order. Throws
/// NoCandidates when nothing survives.
SolveResult solve(const FuncImg& target, std::span<const Ots> candidates,
                  const SolveConfig& cfg, const Vocab& vocab);
SolveResult solve(const FuncImg& target, const CandidateSource& source,
                  const SolveConfig& cfg, const Vocab& vocab);

}  // namespace otsforge
