#include "otsforge/eval.hpp"

namespace otsforge {
namespace {

double eval_node(const OpTree& tree, int i, std::span<const double> x) {
  const Node& n = tree.node(i);
  const double a = n.arity > 0 ? eval_node(tree, n.children[0], x) : 0.0;
  const double b = n.arity > 1 ? eval_node(tree, n.children[1], x) : 0.0;
  const double var = n.kind == OpKind::variable
                         ? x[static_cast<std::size_t>(n.var_index)]
                         : 0.0;
  return apply_op(n.kind, a, b, tree.node_constants(i).data(), var);
}

}  // namespace

double evaluate_point_reference(const OpTree& tree, std::span<const double> x) {
  return eval_node(tree, 0, x);
}

std::vector<double> evaluate_reference(const OpTree& tree, const Points& points) {
  std::vector<double> out(points.rows());
  for (std::size_t r = 0; r < points.rows(); ++r)
    out[r] = evaluate_point_reference(tree, points.row(r));
  return out;
}

}  // namespace otsforge
