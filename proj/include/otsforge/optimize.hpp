#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace otsforge {

/// Returns the loss at x and writes its gradient. A non-finite return marks
/// x as outside the objective's domain; the gradient is then ignored.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsOptions {
  double initial_step = 1.0;
  double stop_delta = 1e-5;
  int max_iters = 200;
  int memory = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_evals = 20;
  double grad_tol = 1e-10;
  bool record_steps = false;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double stop_delta = 1e-5;
  int max_iters = 200;
};

enum class StopReason {
  stop_delta,
  gradient,
  max_iters,
  line_search_failed,
  non_finite,
};

std::string_view to_string(StopReason reason);

/// One accepted line-search step: phi(t) = f(x + t d).
struct StepRecord {
  double step = 0.0;
  double phi0 = 0.0;
  double dphi0 = 0.0;
  double phi = 0.0;
  double dphi = 0.0;
  bool strong_wolfe = false;
};

struct MinimizeResult {
  std::vector<double> x;
  double loss = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  StopReason reason = StopReason::max_iters;
  std::vector<double> history;  // loss after each accepted step, history[0] = start
  std::vector<StepRecord> steps;
};

/// Limited-memory BFGS: two-loop recursion for the direction, strong-Wolfe
/// line search with cubic interpolation for the step. Stops when successive
/// losses differ by less than stop_delta or the gradient vanishes.
MinimizeResult minimize_lbfgs(const Objective& f, std::vector<double> x0,
                              const LbfgsOptions& opt);

/// First-order baseline with bias-corrected moment estimates and decoupled
/// weight decay. Reports the best iterate seen.
MinimizeResult minimize_adam(const Objective& f, std::vector<double> x0,
                             const AdamOptions& opt);

}  // namespace otsforge
