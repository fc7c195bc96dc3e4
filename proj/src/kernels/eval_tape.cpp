#include <algorithm>

#include <fmt/format.h>

#include "otsforge/eval.hpp"

namespace otsforge {
namespace {

constexpr std::size_t kBlock = 256;

inline std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

}  // namespace

void EvalTape::forward(const OpTree& tree, const Points& points) {
  n_points_ = points.rows();
  n_nodes_ = static_cast<std::size_t>(tree.size());
  values_.resize(n_nodes_ * n_points_);
  const auto n_blocks = static_cast<std::ptrdiff_t>(block_count(n_points_));
  const std::size_t m = n_points_;
  double* vals = values_.data();

#pragma omp parallel for schedule(static) if (n_blocks > 1)
  for (std::ptrdiff_t blk = 0; blk < n_blocks; ++blk) {
    const std::size_t p0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t p1 = std::min(m, p0 + kBlock);
    for (int i = tree.size() - 1; i >= 0; --i) {
      const Node& n = tree.node(i);
      const double* c = tree.node_constants(i).data();
      double* out = vals + static_cast<std::size_t>(i) * m;
      const double* va =
          n.arity > 0 ? vals + static_cast<std::size_t>(n.children[0]) * m : nullptr;
      const double* vb =
          n.arity > 1 ? vals + static_cast<std::size_t>(n.children[1]) * m : nullptr;
      for (std::size_t p = p0; p < p1; ++p) {
        const double a = va ? va[p] : 0.0;
        const double b = vb ? vb[p] : 0.0;
        const double x = n.kind == OpKind::variable
                             ? points(p, static_cast<std::size_t>(n.var_index))
                             : 0.0;
        out[p] = apply_op(n.kind, a, b, c, x);
      }
    }
  }
}

void EvalTape::backward(const OpTree& tree, std::span<const double> weights,
                        std::span<double> grad) {
  const std::size_t n_consts = static_cast<std::size_t>(tree.n_constants());
  std::fill(grad.begin(), grad.end(), 0.0);
  if (n_consts == 0 || n_points_ == 0) return;
  const auto n_blocks = static_cast<std::ptrdiff_t>(block_count(n_points_));
  partials_.assign(static_cast<std::size_t>(n_blocks) * n_consts, 0.0);
  const std::size_t m = n_points_;
  const double* vals = values_.data();
  const auto n_nodes = static_cast<std::size_t>(tree.size());

#pragma omp parallel if (n_blocks > 1)
  {
    std::vector<double> adj(n_nodes);
    std::vector<double> local(n_consts);
#pragma omp for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < n_blocks; ++blk) {
      double* block_grad = partials_.data() + static_cast<std::size_t>(blk) * n_consts;
      const std::size_t p0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t p1 = std::min(m, p0 + kBlock);
      for (std::size_t p = p0; p < p1; ++p) {
        const double w = weights[p];
        if (w == 0.0) continue;
        std::fill(adj.begin(), adj.end(), 0.0);
        std::fill(local.begin(), local.end(), 0.0);
        adj[0] = w;
        for (std::size_t i = 0; i < n_nodes; ++i) {
          const double g = adj[i];
          if (g == 0.0) continue;
          const Node& n = tree.node(static_cast<int>(i));
          const auto ca = static_cast<std::size_t>(n.children[0]);
          const auto cb = static_cast<std::size_t>(n.children[1]);
          const double a = n.arity > 0 ? vals[ca * m + p] : 0.0;
          const double b = n.arity > 1 ? vals[cb * m + p] : 0.0;
          const double out = vals[i * m + p];
          const double* c = tree.node_constants(static_cast<int>(i)).data();
          double* lc = local.data() + n.const_offset;
          switch (n.kind) {
            case OpKind::add: adj[ca] += g; adj[cb] += g; break;
            case OpKind::sub: adj[ca] += g; adj[cb] -= g; break;
            case OpKind::mul: adj[ca] += g * b; adj[cb] += g * a; break;
            case OpKind::div:
              adj[ca] += g / b;
              adj[cb] -= g * a / (b * b);
              break;
            case OpKind::pow:
              adj[ca] += g * b * std::pow(a, b - 1.0);
              adj[cb] += a > 0.0 ? g * out * std::log(a) : 0.0;
              break;
            case OpKind::neg: adj[ca] -= g; break;
            case OpKind::inv: adj[ca] -= g / (a * a); break;
            case OpKind::sin: adj[ca] += g * std::cos(a); break;
            case OpKind::cos: adj[ca] -= g * std::sin(a); break;
            case OpKind::tan: adj[ca] += g * (1.0 + out * out); break;
            case OpKind::exp: adj[ca] += g * out; break;
            case OpKind::log: adj[ca] += g / a; break;
            case OpKind::sqrt: adj[ca] += g * 0.5 / out; break;
            case OpKind::abs:
              adj[ca] += a > 0.0 ? g : (a < 0.0 ? -g : 0.0);
              break;
            case OpKind::linear:
              adj[ca] += g * c[0];
              lc[0] += g * a;
              lc[1] += g;
              break;
            case OpKind::constant: lc[0] += g; break;
            case OpKind::variable: break;
          }
        }
        if (std::all_of(local.begin(), local.end(),
                        [](double v) { return std::isfinite(v); }))
          for (std::size_t k = 0; k < n_consts; ++k) block_grad[k] += local[k];
      }
    }
  }
  for (std::ptrdiff_t blk = 0; blk < n_blocks; ++blk)
    for (std::size_t k = 0; k < n_consts; ++k)
      grad[k] += partials_[static_cast<std::size_t>(blk) * n_consts + k];
}

std::vector<double> evaluate(const OpTree& tree, const Points& points) {
  EvalTape tape;
  tape.forward(tree, points);
  auto out = tape.output();
  return {out.begin(), out.end()};
}

LossGrad grad_constants(const OpTree& tree, const Points& points,
                        std::span<const double> targets) {
  if (targets.size() != points.rows())
    throw Error(ErrorKind::invalid_argument,
                fmt::format("{} targets for {} points", targets.size(),
                            points.rows()));
  EvalTape tape;
  tape.forward(tree, points);
  auto pred = tape.output();
  LossGrad out;
  std::vector<double> residual(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!std::isfinite(targets[i]) || !std::isfinite(pred[i])) continue;
    residual[i] = pred[i] - targets[i];
    out.loss += residual[i] * residual[i];
    ++out.n_used;
  }
  if (out.n_used == 0)
    throw Error(ErrorKind::no_finite_points,
                "no point has both a finite prediction and a finite target");
  const double scale = 2.0 / static_cast<double>(out.n_used);
  for (auto& r : residual) r *= scale;
  out.loss /= static_cast<double>(out.n_used);
  out.grad.assign(static_cast<std::size_t>(tree.n_constants()), 0.0);
  tape.backward(tree, residual, out.grad);
  return out;
}

}  // namespace otsforge
