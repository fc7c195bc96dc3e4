#include "otsforge/metrics.hpp"

#include "otsforge/formula.hpp"

namespace otsforge {
namespace {

void require_nonempty(const EvalSet& omega) {
  if (omega.empty()) throw Error(ErrorKind::invalid_argument, "metrics: empty EvalSet");
}

double sequence_term(const EvalPair& pair) {
  const auto t = strip_trailing_end(pair.target);
  const auto p = strip_trailing_end(pair.prediction);
  if (t.empty()) throw Error(ErrorKind::degenerate_target, "metrics: empty target OTS");
  const double l = static_cast<double>(t.size());
  return (l - static_cast<double>(levenshtein<TokenId>(p, t))) / l;
}

double formula_term(const EvalPair& pair, const Vocab& vocab) {
  const OpTree target = decode_bfs(pair.target, pair.target_constants, vocab);
  const std::string ts = render_formula(target);
  if (ts.empty()) throw Error(ErrorKind::degenerate_target, "metrics: empty target formula");
  const auto slots = constant_slots(pair.prediction, vocab);
  if (!slots) return 0.0;
  ConstArray pc(static_cast<std::size_t>(*slots), 0.0);
  if (pair.predicted_constants && pair.predicted_constants->size() == pc.size())
    pc = *pair.predicted_constants;
  const OpTree pred = decode_bfs(pair.prediction, pc, vocab);
  const std::string ps = render_formula(pred);
  const double l = static_cast<double>(ts.size());
  return (l - static_cast<double>(levenshtein(ps, ts))) / l;
}

MetricReport reduce(const std::vector<PairTerms>& terms) {
  MetricReport r;
  r.n = terms.size();
  for (const auto& t : terms) {
    r.acc_r += t.reconstructable;
    r.s_rl += t.sequence;
    r.formula_s_rl += t.formula;
  }
  const double n = static_cast<double>(r.n);
  r.acc_r /= n;
  r.s_rl /= n;
  r.formula_s_rl /= n;
  return r;
}

}  // namespace

PairTerms pair_terms(const EvalPair& pair, const Vocab& vocab) {
  PairTerms t;
  t.reconstructable = is_reconstructable(pair.prediction, vocab) ? 1.0 : 0.0;
  t.sequence = sequence_term(pair);
  t.formula = t.reconstructable > 0.0 ? formula_term(pair, vocab) : 0.0;
  return t;
}

double acc_r(const EvalSet& omega, const Vocab& vocab) {
  require_nonempty(omega);
  double hits = 0.0;
  for (const auto& p : omega) hits += is_reconstructable(p.prediction, vocab) ? 1.0 : 0.0;
  return hits / static_cast<double>(omega.size());
}

double s_rl(const EvalSet& omega) {
  require_nonempty(omega);
  double sum = 0.0;
  for (const auto& p : omega) sum += sequence_term(p);
  return sum / static_cast<double>(omega.size());
}

double formula_s_rl(const EvalSet& omega, const Vocab& vocab) {
  require_nonempty(omega);
  double sum = 0.0;
  for (const auto& p : omega)
    if (is_reconstructable(p.prediction, vocab)) sum += formula_term(p, vocab);
  return sum / static_cast<double>(omega.size());
}

MetricReport evaluate_metrics_serial(const EvalSet& omega, const Vocab& vocab) {
  require_nonempty(omega);
  std::vector<PairTerms> terms;
  terms.reserve(omega.size());
  for (const auto& p : omega) terms.push_back(pair_terms(p, vocab));
  return reduce(terms);
}

MetricReport evaluate_metrics(const EvalSet& omega, const Vocab& vocab) {
  require_nonempty(omega);
  const auto n = static_cast<std::ptrdiff_t>(omega.size());
  std::vector<PairTerms> terms(omega.size());
  std::vector<std::exception_ptr> errors(omega.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      terms[static_cast<std::size_t>(i)] = pair_terms(omega[static_cast<std::size_t>(i)], vocab);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return reduce(terms);
}

}  // namespace otsforge
