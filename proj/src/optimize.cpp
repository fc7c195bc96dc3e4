#include "otsforge/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace otsforge {

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::stop_delta: return "stop_delta";
    case StopReason::gradient: return "gradient";
    case StopReason::max_iters: return "max_iters";
    case StopReason::line_search_failed: return "line_search_failed";
    case StopReason::non_finite: return "non_finite";
  }
  return "?";
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::fabs(v));
  return m;
}

/// Minimiser of the cubic through (x1, f1, g1), (x2, f2, g2), clamped to
/// [lo, hi]; midpoint when the fit is degenerate.
double cubic_minimizer(double x1, double f1, double g1, double x2, double f2,
                       double g2, double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  if (!(std::isfinite(f1) && std::isfinite(f2) && std::isfinite(g1) &&
        std::isfinite(g2)) || x1 == x2)
    return mid;
  const double d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
  const double d2_sq = d1 * d1 - g1 * g2;
  if (!(d2_sq >= 0.0)) return mid;
  const double d2 = std::sqrt(d2_sq);
  double t;
  if (x1 <= x2)
    t = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
  else
    t = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2));
  if (!std::isfinite(t)) return mid;
  return std::clamp(t, lo, hi);
}

struct Trial {
  double t = 0.0;
  double f = 0.0;
  double dphi = 0.0;
  std::vector<double> g;
};

struct SearchOutcome {
  Trial best;
  bool satisfied = false;
  int evals = 0;
};

class LineSearch {
 public:
  LineSearch(const Objective& f, std::span<const double> x, std::span<const double> d,
             const LbfgsOptions& opt)
      : f_(f), x_(x), d_(d), opt_(opt), xt_(x.size()) {}

  SearchOutcome run(double f0, std::span<const double> g0, double dphi0, double t0) {
    SearchOutcome out;
    Trial prev{0.0, f0, dphi0, {g0.begin(), g0.end()}};
    Trial cur = eval(t0, out);
    auto sufficient = [&](const Trial& tr) {
      return tr.f <= f0 + opt_.c1 * tr.t * dphi0;
    };
    auto curvature = [&](const Trial& tr) {
      return std::fabs(tr.dphi) <= -opt_.c2 * dphi0;
    };

    Trial lo, hi;
    bool bracketed = false;
    while (true) {
      if (!sufficient(cur) || (out.evals > 1 && cur.f >= prev.f)) {
        lo = prev; hi = cur; bracketed = true;
        break;
      }
      if (curvature(cur)) {
        out.best = cur; out.satisfied = true;
        return out;
      }
      if (cur.dphi >= 0.0) {
        lo = cur; hi = prev; bracketed = true;
        break;
      }
      if (out.evals >= opt_.max_line_evals) break;
      const double lo_t = cur.t + 0.01 * (cur.t - prev.t);
      const double hi_t = cur.t * 10.0;
      const double next = cubic_minimizer(prev.t, prev.f, prev.dphi, cur.t, cur.f,
                                          cur.dphi, lo_t, hi_t);
      prev = std::move(cur);
      cur = eval(next, out);
    }
    if (!bracketed) {
      out.best = std::move(cur);
      return out;
    }

    // zoom: lo always satisfies sufficient decrease with the lowest f seen
    bool insufficient_progress = false;
    while (out.evals < opt_.max_line_evals) {
      const double a = std::min(lo.t, hi.t), b = std::max(lo.t, hi.t);
      if ((b - a) * max_abs_d() < 1e-12) break;
      double t = cubic_minimizer(lo.t, lo.f, lo.dphi, hi.t, hi.f, hi.dphi, a, b);
      const double eps = 0.1 * (b - a);
      if (std::min(b - t, t - a) < eps) {
        if (insufficient_progress || t >= b || t <= a) {
          t = std::fabs(t - b) < std::fabs(t - a) ? b - eps : a + eps;
          insufficient_progress = false;
        } else {
          insufficient_progress = true;
        }
      } else {
        insufficient_progress = false;
      }
      Trial trial = eval(t, out);
      if (!sufficient(trial) || trial.f >= lo.f) {
        hi = std::move(trial);
      } else {
        if (curvature(trial)) {
          out.best = std::move(trial); out.satisfied = true;
          return out;
        }
        if (trial.dphi * (hi.t - lo.t) >= 0.0) hi = lo;
        lo = std::move(trial);
      }
    }
    out.best = std::move(lo);
    return out;
  }

 private:
  Trial eval(double t, SearchOutcome& out) {
    for (std::size_t i = 0; i < xt_.size(); ++i) xt_[i] = x_[i] + t * d_[i];
    Trial tr;
    tr.t = t;
    tr.g.assign(xt_.size(), 0.0);
    tr.f = f_(xt_, tr.g);
    ++out.evals;
    if (!std::isfinite(tr.f)) {
      tr.f = std::numeric_limits<double>::infinity();
      tr.dphi = std::numeric_limits<double>::quiet_NaN();
    } else {
      tr.dphi = dot(tr.g, d_);
    }
    return tr;
  }

  double max_abs_d() const { return norm_inf(d_); }

  const Objective& f_;
  std::span<const double> x_;
  std::span<const double> d_;
  const LbfgsOptions& opt_;
  std::vector<double> xt_;
};

}  // namespace

MinimizeResult minimize_lbfgs(const Objective& f, std::vector<double> x0,
                              const LbfgsOptions& opt) {
  MinimizeResult res;
  const std::size_t n = x0.size();
  res.x = std::move(x0);
  std::vector<double> g(n, 0.0);
  res.loss = f(res.x, g);
  res.evaluations = 1;
  if (!std::isfinite(res.loss)) {
    res.loss = std::numeric_limits<double>::infinity();
    res.reason = StopReason::non_finite;
    return res;
  }
  res.history.push_back(res.loss);
  if (n == 0 || norm_inf(g) <= opt.grad_tol) {
    res.converged = true;
    res.reason = StopReason::gradient;
    return res;
  }

  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho;
  std::vector<double> d(n), q(n), alpha_buf;
  for (int iter = 1; iter <= opt.max_iters; ++iter) {
    // two-loop recursion
    q = g;
    alpha_buf.assign(S.size(), 0.0);
    for (std::size_t k = S.size(); k-- > 0;) {
      alpha_buf[k] = rho[k] * dot(S[k], q);
      for (std::size_t i = 0; i < n; ++i) q[i] -= alpha_buf[k] * Y[k][i];
    }
    if (!S.empty()) {
      const double gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
      for (auto& v : q) v *= gamma;
    }
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double beta = rho[k] * dot(Y[k], q);
      for (std::size_t i = 0; i < n; ++i) q[i] += S[k][i] * (alpha_buf[k] - beta);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];
    double dphi0 = dot(g, d);
    if (!(dphi0 < 0.0) || !std::isfinite(dphi0)) {
      S.clear(); Y.clear(); rho.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      dphi0 = -dot(g, g);
    }
    double t0 = opt.initial_step;
    if (S.empty()) {
      double l1 = 0.0;
      for (double v : g) l1 += std::fabs(v);
      t0 = opt.initial_step * std::min(1.0, 1.0 / l1);
    }

    LineSearch search(f, res.x, d, opt);
    SearchOutcome ls = search.run(res.loss, g, dphi0, t0);
    res.evaluations += ls.evals;
    const Trial& step = ls.best;
    if (step.t == 0.0 || !(step.f < res.loss)) {
      res.reason = StopReason::line_search_failed;
      return res;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = step.t * d[i];
      y[i] = step.g[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-10) {
      S.push_back(std::move(s)); Y.push_back(std::move(y)); rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opt.memory) {
        S.pop_front(); Y.pop_front(); rho.pop_front();
      }
    }
    const double previous = res.loss;
    for (std::size_t i = 0; i < n; ++i) res.x[i] += step.t * d[i];
    res.loss = step.f;
    g = step.g;
    res.iterations = iter;
    res.history.push_back(res.loss);
    if (opt.record_steps)
      res.steps.push_back({step.t, previous, dphi0, step.f, step.dphi, ls.satisfied});

    if (!ls.satisfied) {
      res.reason = StopReason::line_search_failed;
      return res;
    }
    if (std::fabs(previous - res.loss) < opt.stop_delta) {
      res.converged = true;
      res.reason = StopReason::stop_delta;
      return res;
    }
    if (norm_inf(g) <= opt.grad_tol) {
      res.converged = true;
      res.reason = StopReason::gradient;
      return res;
    }
  }
  res.reason = StopReason::max_iters;
  return res;
}

MinimizeResult minimize_adam(const Objective& f, std::vector<double> x0,
                             const AdamOptions& opt) {
  MinimizeResult res;
  const std::size_t n = x0.size();
  std::vector<double> x = std::move(x0), g(n, 0.0), m(n, 0.0), v(n, 0.0);
  double loss = f(x, g);
  res.evaluations = 1;
  res.x = x;
  res.loss = loss;
  if (!std::isfinite(loss)) {
    res.loss = std::numeric_limits<double>::infinity();
    res.reason = StopReason::non_finite;
    return res;
  }
  res.history.push_back(loss);
  if (n == 0) {
    res.converged = true;
    res.reason = StopReason::gradient;
    return res;
  }
  for (int t = 1; t <= opt.max_iters; ++t) {
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      x[i] -= opt.learning_rate * opt.weight_decay * x[i];
      x[i] -= opt.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.eps);
    }
    const double next = f(x, g);
    ++res.evaluations;
    res.iterations = t;
    if (!std::isfinite(next)) {
      res.reason = StopReason::non_finite;
      return res;
    }
    res.history.push_back(next);
    if (next < res.loss) {
      res.loss = next;
      res.x = x;
    }
    if (std::fabs(next - loss) < opt.stop_delta) {
      res.converged = true;
      res.reason = StopReason::stop_delta;
      return res;
    }
    loss = next;
  }
  res.reason = StopReason::max_iters;
  return res;
}

}  // namespace otsforge
