#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "otsforge/funcimg.hpp"
#include "otsforge/optimize.hpp"
#include "otsforge/optree.hpp"

namespace otsforge {

enum class Optimizer { lbfgs, first_order };

std::string_view to_string(Optimizer opt);
Optimizer optimizer_from_string(std::string_view name);

struct FitConfig {
  Optimizer optimizer = Optimizer::lbfgs;
  double learning_rate = 1.0;
  /// The paired-optimizer comparison uses 1e-5.
  double stop_delta = 1e-9;
  int max_iters = 200;
  int lbfgs_memory = 10;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  double init_lo = -2.0;
  double init_hi = 2.0;
  int restarts = 4;
  /// Loss-only evaluations over the init range; the best ones seed the
  /// restarts. 0 gives plain stratified random starts.
  int screen_samples = 1024;
  std::uint64_t seed = 0;
  /// Start of restart 0 instead of a random draw.
  std::optional<ConstArray> initial_constants;
  bool record_steps = false;

  void validate() const;
};

struct FitResult {
  ConstArray constants;
  double final_mse = 0.0;
  int iterations = 0;
  bool converged = false;
  int restart_index = 0;
  StopReason stop_reason = StopReason::stop_delta;
  int evaluations = 0;
  std::vector<double> restart_mse;  // +inf for restarts that never left a non-finite start
  std::vector<double> history;      // loss trace of the winning restart
  std::vector<StepRecord> steps;    // accepted steps of the winning restart (record_steps)
};

/// MSE between the tree's normalized rendering and a target image, over the
/// target's masked-true entries where the prediction is finite. The
/// prediction is min-max normalized per channel exactly as render() does,
/// and the gradient is taken through that normalization, including the
/// dependence of the channel min and max on the constants.
class ImageObjective {
 public:
  ImageObjective(OpTree tree, const FuncImg& target);

  /// Loss at `constants`; +inf when no entry survives.
  double operator()(std::span<const double> constants, std::span<double> grad);
  double value(std::span<const double> constants);

  [[nodiscard]] const OpTree& tree() const { return tree_; }

 private:
  struct Channel {
    Points points;
    std::vector<double> target_sum;  // per point, over valid target rows
    std::vector<double> target_sq;
    std::vector<double> n_valid;
  };
  double run(std::span<const double> constants, std::span<double> grad, bool want_grad);

  OpTree tree_;
  std::vector<Channel> channels_;
  std::vector<EvalTape> tapes_;
  std::vector<double> weights_;
  std::vector<double> channel_grad_;
};

/// Decodes the OTS (constants zero-filled) and fits its constants.
FitResult fit(std::span<const TokenId> ots, const FuncImg& target, const FitConfig& cfg,
              const Vocab& vocab);
/// Fits the constants of an already decoded tree.
FitResult fit_tree(const OpTree& tree, const FuncImg& target, const FitConfig& cfg);
/// fit() with the first-order update rule regardless of cfg.optimizer.
FitResult fit_first_order(std::span<const TokenId> ots, const FuncImg& target,
                          const FitConfig& cfg, const Vocab& vocab);

struct BatchItem {
  Ots ots;
  FuncImg target;
};

struct BatchSlot {
  std::optional<FitResult> result;
  ErrorKind error_kind = ErrorKind::invalid_argument;
  std::string error;

  [[nodiscard]] bool ok() const { return result.has_value(); }
};

/// Order statistics over the successful slots; the q-quantile is the
/// element at index floor(q * (n - 1)) of the sorted values, so the median
/// of an even count is the lower of the two middle values.
struct BatchSummary {
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  double median_mse = 0.0;
  double q1_mse = 0.0;
  double q3_mse = 0.0;
  double median_iterations = 0.0;
};

struct BatchOutcome {
  std::vector<BatchSlot> slots;
  BatchSummary summary;
};

double order_statistic(std::vector<double> values, double q);

/// Independent fits in parallel (one item per worker); each item's error
/// stays in its slot. Item i uses seed cfg.seed + i.
BatchOutcome fit_batch(const std::vector<BatchItem>& items, const FitConfig& cfg,
                       const Vocab& vocab);
BatchOutcome fit_batch_serial(const std::vector<BatchItem>& items, const FitConfig& cfg,
                              const Vocab& vocab);

}  // namespace otsforge
