#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "otsforge/optree.hpp"

namespace otsforge {

/// Unit-cost edit distance, two-row dynamic programme.
template <typename T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein<char>(std::span<const char>(a.data(), a.size()),
                           std::span<const char>(b.data(), b.size()));
}

struct EvalPair {
  Ots prediction;
  Ots target;
  ConstArray target_constants;
  std::optional<ConstArray> predicted_constants;
};

using EvalSet = std::vector<EvalPair>;

/// Fraction of predictions that decode into a tree.
double acc_r(const EvalSet& omega, const Vocab& vocab);
/// Mean relative token-level similarity, trailing 'end' stripped on both
/// sides. Throws DegenerateTarget on an empty stripped target.
double s_rl(const EvalSet& omega);
/// Mean relative similarity of rendered formula strings; undecodable
/// predictions contribute 0. Missing or mis-sized predicted constants are
/// zero-filled.
double formula_s_rl(const EvalSet& omega, const Vocab& vocab);

/// Per-pair summands of the three metrics.
struct PairTerms {
  double reconstructable = 0.0;
  double sequence = 0.0;
  double formula = 0.0;
};

PairTerms pair_terms(const EvalPair& pair, const Vocab& vocab);

struct MetricReport {
  double acc_r = 0.0;
  double s_rl = 0.0;
  double formula_s_rl = 0.0;
  std::size_t n = 0;
};

/// All three metrics in one pass; pairs are scored in parallel and summed in
/// input order, so the result does not depend on the thread count.
MetricReport evaluate_metrics(const EvalSet& omega, const Vocab& vocab);

/// Serial reference of evaluate_metrics.
MetricReport evaluate_metrics_serial(const EvalSet& omega, const Vocab& vocab);

}  // namespace otsforge
