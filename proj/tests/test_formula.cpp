#include <doctest.h>

#include <cmath>

#include "otsforge/eval.hpp"
#include "otsforge/formula.hpp"
#include "otsforge/treegen.hpp"
#include "support/oracles.hpp"

using namespace otsforge;

namespace {
const Vocab& V() { return default_vocab(); }
std::string R(const char* prefix, int precision = 4) {
  return render_formula(parse_tree(prefix, V()), precision);
}
}  // namespace

TEST_SUITE("formula") {

TEST_CASE("examples") {
  CHECK(R("add(C[0],x0)") == "x0");
  CHECK(R("mul(x1,x0)") == "x0*x1");
  CHECK(R("mul(x0,x1)") == "x0*x1");
  CHECK(R("L[-1.15,-1.13](div(x0,x1))") == "-1.1500*x0/x1 - 1.1300");
}

TEST_CASE("identities") {
  CHECK(R("sub(x0,C[0])") == "x0");
  CHECK(R("mul(C[1],x0)") == "x0");
  CHECK(R("div(x0,C[1])") == "x0");
  CHECK(R("pow(x0,C[0])") == "1.0000");
  CHECK(R("pow(x0,C[1])") == "x0");
  CHECK(R("neg(sin(neg(x0)))") == "-sin(-x0)");
  CHECK(R("neg(abs(neg(x0)))") == "-abs(-x0)");
  CHECK(R("inv(cos(inv(x0)))") == "1/cos(1/x0)");
  CHECK(R("L[1,0](x0)") == "x0");
  CHECK(R("mul(C[0],x0)") == "0.0000");
}

TEST_CASE("constant folding") {
  CHECK(R("add(C[1],C[2])") == "3.0000");
  CHECK(R("add(x0,mul(C[2],C[3]))") == "x0 + 6.0000");
  CHECK(R("sin(C[0])") == "0.0000");
  CHECK(R("L[2,1](C[3])") == "7.0000");
}

TEST_CASE("signs and precedence") {
  CHECK(R("add(x0,neg(x1))") == "x0 - x1");
  CHECK(R("sub(x0,neg(x1))") == "x0 + x1");
  CHECK(R("sub(x0,add(x1,C[1]))") == "x0 - (x1 + 1.0000)");
  CHECK(R("mul(add(x0,C[1]),x1)") == "(x0 + 1.0000)*x1");
  CHECK(R("div(x0,mul(x1,x1))") == "x0/(x1*x1)");
  CHECK(R("pow(add(x0,C[1]),C[2])") == "(x0 + 1.0000)^2.0000");
  CHECK(R("pow(x0,C[-2])") == "x0^(-2.0000)");
  CHECK(R("add(x0,C[-0.00001])") == "x0 + 0.0000");
  CHECK(R("C[-0.00001]") == "0.0000");
}

TEST_CASE("commutative variants render identically") {
  CHECK(R("add(x0,C[1.5])") == R("add(C[1.5],x0)"));
  CHECK(R("add(x0,C[1.5])") == "x0 + 1.5000");
  CHECK(R("mul(x0,C[1.5])") == "1.5000*x0");
  CHECK(R("add(sin(x0),cos(x0))") == R("add(cos(x0),sin(x0))"));
}

TEST_CASE("skeleton rendering") {
  CHECK(render_skeleton(parse_tree("L[2,3](mul(x0,C[4]))", V())) == "c*c*x0 + c");
  CHECK(render_skeleton(parse_tree("add(C[0],x0)", V())) == "x0 + c");
}

TEST_CASE("constant detection") {
  CHECK(is_constant_formula(parse_tree("C[1]", V())));
  CHECK(is_constant_formula(parse_tree("add(mul(C[0],x0),C[1])", V())));
  CHECK(is_constant_formula(parse_tree("L[0,2](x0)", V())));
  CHECK_FALSE(is_constant_formula(parse_tree("L[0.5,2](x0)", V())));
  CHECK_FALSE(is_constant_formula(parse_tree("sin(x0)", V())));
}

TEST_CASE("determinism") {
  const OpTree t = parse_tree("add(L[0.3,0.1](exp(x1)),div(x0,C[2]))", V());
  CHECK(render_formula(t) == render_formula(t));
}

TEST_CASE("rendering respects semantics") {
  GenConfig cfg;
  cfg.n_vars = 2;
  TreeGenerator gen(V(), cfg);
  Rng rng(3, 0);
  int compared = 0;
  for (int i = 0; i < 1500; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    OpTree t = gen.assign_symbols(gen.sample_skeleton(r), r);
    t.set_constants(gen.sample_constants(t, r));
    const std::string s = render_formula(t, 17);
    for (int k = 0; k < 8; ++k) {
      const double x[2] = {r.uniform(-3, 3), r.uniform(-3, 3)};
      const double a = evaluate_point_reference(t, x);
      const double b = oracle::eval_infix(s, x);
      if (!std::isfinite(a) || !std::isfinite(b)) continue;
      INFO(to_prefix(t, V()), " -> ", s);
      CHECK(std::fabs(a - b) <= 1e-9 * std::max(1.0, std::fabs(a)));
      ++compared;
    }
  }
  CHECK(compared > 3000);
}

}
