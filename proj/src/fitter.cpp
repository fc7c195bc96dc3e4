#include "otsforge/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include <fmt/format.h>

#include "otsforge/rng.hpp"

namespace otsforge {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string_view to_string(Optimizer opt) {
  return opt == Optimizer::lbfgs ? "lbfgs" : "first_order";
}

Optimizer optimizer_from_string(std::string_view name) {
  if (name == "lbfgs") return Optimizer::lbfgs;
  if (name == "first_order" || name == "first-order" || name == "adamw")
    return Optimizer::first_order;
  throw Error(ErrorKind::invalid_argument, fmt::format("unknown optimizer '{}'", name));
}

void FitConfig::validate() const {
  auto bad = [](const std::string& m) { return Error(ErrorKind::invalid_argument, "fit: " + m); };
  if (!(learning_rate > 0)) throw bad("learning_rate must be > 0");
  if (!(stop_delta > 0)) throw bad("stop_delta must be > 0");
  if (!(0 < wolfe_c1 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1))
    throw bad("need 0 < wolfe_c1 < wolfe_c2 < 1");
  if (max_iters < 0) throw bad("max_iters must be >= 0");
  if (lbfgs_memory < 1) throw bad("lbfgs_memory must be >= 1");
  if (restarts < 1) throw bad("restarts must be >= 1");
  if (!(init_lo <= init_hi)) throw bad("init_range is empty");
  if (screen_samples < 0) throw bad("screen_samples must be >= 0");
}

// ------------------------------------------------------------ objective

ImageObjective::ImageObjective(OpTree tree, const FuncImg& target) : tree_(std::move(tree)) {
  if (target.scales.size() != static_cast<std::size_t>(target.n_scales))
    throw Error(ErrorKind::invalid_argument,
                "fit: target image carries no scale metadata for its channels");
  if (target.resolution < 2 || target.data.size() != target.n_scales * target.channel_size())
    throw Error(ErrorKind::invalid_argument, "fit: malformed target image");
  if (tree_.max_var_index() >= target.n_vars)
    throw Error(ErrorKind::invalid_argument,
                fmt::format("fit: tree uses x{} but the target has {} variable(s)",
                            tree_.max_var_index(), target.n_vars));
  const int res = target.resolution;
  for (int s = 0; s < target.n_scales; ++s) {
    Channel ch;
    ch.points = channel_points(target.scales[static_cast<std::size_t>(s)], res, target.n_vars);
    const std::size_t n = ch.points.rows();
    ch.target_sum.assign(n, 0.0);
    ch.target_sq.assign(n, 0.0);
    ch.n_valid.assign(n, 0.0);
    for (int r = 0; r < res; ++r)
      for (int c = 0; c < res; ++c) {
        if (!target.valid(s, r, c)) continue;
        const std::size_t p = target.n_vars == 1
                                  ? static_cast<std::size_t>(c)
                                  : static_cast<std::size_t>(r) * static_cast<std::size_t>(res) +
                                        static_cast<std::size_t>(c);
        const double t = target.at(s, r, c);
        ch.target_sum[p] += t;
        ch.target_sq[p] += t * t;
        ch.n_valid[p] += 1.0;
      }
    channels_.push_back(std::move(ch));
  }
  tapes_.resize(channels_.size());
}

double ImageObjective::operator()(std::span<const double> constants, std::span<double> grad) {
  return run(constants, grad, true);
}

double ImageObjective::value(std::span<const double> constants) {
  return run(constants, {}, false);
}

double ImageObjective::run(std::span<const double> constants, std::span<double> grad,
                           bool want_grad) {
  tree_.set_constants(constants);
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  // first pass: normalized predictions and the entry count
  struct Norm {
    double lo = 0, range = 0;
    std::size_t argmin = 0, argmax = 0;
    bool scaled = false;
  };
  std::vector<std::vector<double>> pred(channels_.size());
  std::vector<Norm> norms(channels_.size());
  double sum = 0.0, count = 0.0;
  for (std::size_t s = 0; s < channels_.size(); ++s) {
    const Channel& ch = channels_[s];
    tapes_[s].forward(tree_, ch.points);
    const auto y = tapes_[s].output();
    Norm& nm = norms[s];
    double lo = kInf, hi = -kInf;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (std::isfinite(y[i])) {
        if (y[i] < lo) { lo = y[i]; nm.argmin = i; }
        if (y[i] > hi) { hi = y[i]; nm.argmax = i; }
      }
    nm.lo = lo;
    nm.range = hi - lo;
    nm.scaled = nm.range > 0.0 && std::isfinite(nm.range);
    auto& p = pred[s];
    p.assign(y.size(), std::nan(""));
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (!std::isfinite(y[i])) continue;
      p[i] = nm.scaled ? (y[i] - lo) / nm.range : 0.0;
      if (nm.range > 0.0 && !nm.scaled)  // overflowing range, as in render()
        p[i] = std::clamp((0.5 * y[i] - 0.5 * lo) / (0.5 * hi - 0.5 * lo), 0.0, 1.0);
      const double n = ch.n_valid[i];
      if (n == 0.0) continue;
      sum += n * p[i] * p[i] - 2.0 * p[i] * ch.target_sum[i] + ch.target_sq[i];
      count += n;
    }
  }
  if (count == 0.0) return kInf;
  const double loss = std::max(0.0, sum / count);
  if (!want_grad || grad.empty()) return loss;

  // second pass: weights through the normalization, then one VJP per channel
  for (std::size_t s = 0; s < channels_.size(); ++s) {
    const Norm& nm = norms[s];
    if (!nm.scaled) continue;
    const Channel& ch = channels_[s];
    const auto& p = pred[s];
    weights_.assign(p.size(), 0.0);
    double g_sum = 0.0, gp_sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(p[i]) || ch.n_valid[i] == 0.0) continue;
      const double g = 2.0 * (ch.n_valid[i] * p[i] - ch.target_sum[i]) / count;
      weights_[i] = g / nm.range;
      g_sum += g;
      gp_sum += g * p[i];
    }
    weights_[nm.argmin] += (gp_sum - g_sum) / nm.range;
    weights_[nm.argmax] -= gp_sum / nm.range;
    channel_grad_.assign(grad.size(), 0.0);
    tapes_[s].backward(tree_, weights_, channel_grad_);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += channel_grad_[k];
  }
  return loss;
}

// ------------------------------------------------------------ fitting

namespace {

MinimizeResult run_optimizer(ImageObjective& obj, std::vector<double> x0, const FitConfig& cfg,
                             Optimizer which) {
  Objective f = [&obj](std::span<const double> x, std::span<double> g) { return obj(x, g); };
  if (which == Optimizer::lbfgs) {
    LbfgsOptions o;
    o.initial_step = cfg.learning_rate;
    o.stop_delta = cfg.stop_delta;
    o.max_iters = cfg.max_iters;
    o.memory = cfg.lbfgs_memory;
    o.c1 = cfg.wolfe_c1;
    o.c2 = cfg.wolfe_c2;
    o.record_steps = cfg.record_steps;
    return minimize_lbfgs(f, std::move(x0), o);
  }
  AdamOptions o;
  o.learning_rate = cfg.learning_rate;
  o.stop_delta = cfg.stop_delta;
  o.max_iters = cfg.max_iters;
  return minimize_adam(f, std::move(x0), o);
}

constexpr int kInitAttempts = 8;

// Latin hypercube: n points in k dimensions, one per stratum of the init
// range along every coordinate.
std::vector<std::vector<double>> latin_hypercube(std::size_t k, int n, const FitConfig& cfg,
                                                 std::uint64_t stream) {
  Rng rng(cfg.seed, stream);
  const auto m = static_cast<std::uint32_t>(n);
  const double width = (cfg.init_hi - cfg.init_lo) / static_cast<double>(n);
  std::vector<std::vector<double>> pts(static_cast<std::size_t>(n), std::vector<double>(k));
  std::vector<std::uint32_t> perm(m);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::uint32_t i = 0; i < m; ++i) perm[i] = i;
    for (std::uint32_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::uint32_t i = 0; i < m; ++i)
      pts[i][j] = cfg.init_lo + (static_cast<double>(perm[i]) + rng.uniform()) * width;
  }
  return pts;
}

std::vector<std::vector<double>> restart_starts(ImageObjective& obj, std::size_t k,
                                                const FitConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.restarts);
  std::vector<std::vector<double>> starts;
  starts.reserve(n);
  if (cfg.initial_constants) starts.push_back(*cfg.initial_constants);
  if (cfg.screen_samples > 0) {
    auto pts = latin_hypercube(k, cfg.screen_samples, cfg, 0x5c4ee9ULL);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double v = obj.value(pts[i]);
      if (std::isfinite(v)) scored.emplace_back(v, i);
    }
    std::sort(scored.begin(), scored.end());
    for (std::size_t i = 0; i < scored.size() && starts.size() < n; ++i)
      starts.push_back(pts[scored[i].second]);
  }
  // Remaining restarts: stratified draws, redrawn while non-finite.
  auto grid = latin_hypercube(k, cfg.restarts, cfg, 0xffffffffULL);
  const double width = (cfg.init_hi - cfg.init_lo) / static_cast<double>(cfg.restarts);
  for (std::size_t r = starts.size(); r < n; ++r) {
    std::vector<double> x0 = grid[r];
    Rng rng(cfg.seed, r);
    for (int attempt = 0; attempt < kInitAttempts && !std::isfinite(obj.value(x0)); ++attempt)
      for (std::size_t j = 0; j < k; ++j)
        x0[j] = cfg.init_lo + std::floor((grid[r][j] - cfg.init_lo) / width) * width +
                rng.uniform() * width;
    starts.push_back(std::move(x0));
  }
  return starts;
}

FitResult fit_with(const OpTree& tree, const FuncImg& target, const FitConfig& cfg,
                   Optimizer which) {
  cfg.validate();
  ImageObjective obj(tree, target);
  const auto k = static_cast<std::size_t>(tree.n_constants());
  FitResult best;
  best.final_mse = kInf;
  if (k == 0) {
    const double mse = obj.value({});
    if (!std::isfinite(mse))
      throw Error(ErrorKind::no_finite_points, "fit: prediction has no finite overlap with target");
    best.final_mse = mse;
    best.converged = true;
    best.restart_mse = {mse};
    best.history = {mse};
    best.evaluations = 1;
    return best;
  }
  if (cfg.initial_constants && cfg.initial_constants->size() != k)
    throw Error(ErrorKind::invalid_argument,
                fmt::format("fit: {} initial constants for {} slots",
                            cfg.initial_constants->size(), k));
  auto starts = restart_starts(obj, k, cfg);
  for (int r = 0; r < cfg.restarts; ++r) {
    std::vector<double> x0 = std::move(starts[static_cast<std::size_t>(r)]);
    MinimizeResult m = run_optimizer(obj, std::move(x0), cfg, which);
    best.restart_mse.push_back(m.loss);
    best.evaluations += m.evaluations;
    if (m.loss < best.final_mse) {
      best.final_mse = m.loss;
      best.constants = std::move(m.x);
      best.iterations = m.iterations;
      best.converged = m.converged;
      best.restart_index = r;
      best.stop_reason = m.reason;
      best.history = std::move(m.history);
      best.steps = std::move(m.steps);
    }
  }
  if (!std::isfinite(best.final_mse))
    throw Error(ErrorKind::no_finite_points,
                "fit: no restart reached a point with finite overlap with the target");
  return best;
}

OpTree structure_of(std::span<const TokenId> ots, const Vocab& vocab) {
  auto r = try_decode_bfs(ots, std::nullopt, vocab);
  if (!r.ok()) throw ReconstructionError(r.reason, r.detail);
  return std::move(*r.tree);
}

}  // namespace

FitResult fit_tree(const OpTree& tree, const FuncImg& target, const FitConfig& cfg) {
  return fit_with(tree, target, cfg, cfg.optimizer);
}

FitResult fit(std::span<const TokenId> ots, const FuncImg& target, const FitConfig& cfg,
              const Vocab& vocab) {
  return fit_with(structure_of(ots, vocab), target, cfg, cfg.optimizer);
}

FitResult fit_first_order(std::span<const TokenId> ots, const FuncImg& target,
                          const FitConfig& cfg, const Vocab& vocab) {
  return fit_with(structure_of(ots, vocab), target, cfg, Optimizer::first_order);
}

// ------------------------------------------------------------ batches

double order_statistic(std::vector<double> values, double q) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(values.size() - 1)));
  return values[idx];
}

namespace {

BatchSlot fit_slot(const BatchItem& item, std::size_t index, const FitConfig& cfg,
                   const Vocab& vocab) {
  BatchSlot slot;
  FitConfig c = cfg;
  c.seed = cfg.seed + index;
  try {
    slot.result = fit(item.ots, item.target, c, vocab);
  } catch (const Error& e) {
    slot.error_kind = e.kind();
    slot.error = e.what();
  }
  return slot;
}

BatchSummary summarize(const std::vector<BatchSlot>& slots) {
  BatchSummary s;
  std::vector<double> mse, iters;
  for (const auto& slot : slots) {
    if (!slot.ok()) {
      ++s.n_failed;
      continue;
    }
    ++s.n_ok;
    mse.push_back(slot.result->final_mse);
    iters.push_back(slot.result->iterations);
  }
  s.median_mse = order_statistic(mse, 0.5);
  s.q1_mse = order_statistic(mse, 0.25);
  s.q3_mse = order_statistic(mse, 0.75);
  s.median_iterations = order_statistic(iters, 0.5);
  return s;
}

}  // namespace

BatchOutcome fit_batch_serial(const std::vector<BatchItem>& items, const FitConfig& cfg,
                              const Vocab& vocab) {
  if (items.empty()) throw Error(ErrorKind::invalid_argument, "fit_batch: no items");
  cfg.validate();
  BatchOutcome out;
  for (std::size_t i = 0; i < items.size(); ++i) out.slots.push_back(fit_slot(items[i], i, cfg, vocab));
  out.summary = summarize(out.slots);
  return out;
}

BatchOutcome fit_batch(const std::vector<BatchItem>& items, const FitConfig& cfg,
                       const Vocab& vocab) {
  if (items.empty()) throw Error(ErrorKind::invalid_argument, "fit_batch: no items");
  cfg.validate();
  BatchOutcome out;
  out.slots.resize(items.size());
  const auto n = static_cast<std::ptrdiff_t>(items.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.slots[k] = fit_slot(items[k], k, cfg, vocab);
  }
  out.summary = summarize(out.slots);
  return out;
}

}  // namespace otsforge
