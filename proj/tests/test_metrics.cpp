#include <doctest.h>

#include <string>

#include "otsforge/metrics.hpp"
#include "otsforge/rng.hpp"
#include "otsforge/treegen.hpp"
#include "support/oracles.hpp"

using namespace otsforge;

namespace {
const Vocab& V() { return default_vocab(); }

EvalPair pair_of(const char* pred, const char* target) {
  const auto p = encode_bfs(parse_tree(pred, V()));
  const auto t = encode_bfs(parse_tree(target, V()));
  return {p.ots, t.ots, t.constants, p.constants};
}

std::size_t lev(const std::vector<int>& a, const std::vector<int>& b) {
  return levenshtein<int>(a, b);
}
}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("levenshtein examples") {
  CHECK(lev({1, 2, 3}, {1, 2, 3}) == 0);
  CHECK(levenshtein("kitten", "sitting") == 3);
  CHECK(lev({1, 2, 3}, {}) == 3);
  CHECK(lev({}, {}) == 0);
  CHECK(levenshtein("flaw", "lawn") == 2);
}

TEST_CASE("levenshtein properties against the dp oracle") {
  Rng rng(17, 0);
  for (int i = 0; i < 3000; ++i) {
    auto draw = [&] {
      std::vector<int> v(rng.below(12));
      for (auto& x : v) x = static_cast<int>(rng.below(4));
      return v;
    };
    const auto a = draw(), b = draw(), c = draw();
    const auto ab = lev(a, b);
    CHECK(ab == oracle::edit_distance(a, b));
    CHECK(ab == lev(b, a));
    CHECK((ab == 0) == (a == b));
    CHECK(lev(a, c) <= ab + lev(b, c));
  }
}

TEST_CASE("acc_r") {
  EvalSet all{pair_of("x0", "x0"), pair_of("sin(x0)", "x0")};
  CHECK(acc_r(all, V()) == 1.0);
  EvalSet half{pair_of("x0", "x0"), {Ots{4, 17}, Ots{17, 0, 0}, {}, std::nullopt}};
  CHECK(acc_r(half, V()) == 0.5);
  EvalSet empty{{Ots{}, Ots{17, 0, 0}, {}, std::nullopt}, {Ots{}, Ots{17}, {}, std::nullopt}};
  CHECK(acc_r(empty, V()) == 0.0);
  CHECK_THROWS_AS(acc_r(EvalSet{}, V()), Error);
}

TEST_CASE("s_rl") {
  EvalSet same{pair_of("add(x0,C[1])", "add(x0,C[1])")};
  CHECK(s_rl(same) == 1.0);
  // stripped target [17, 16, ...]: four tokens, one substitution
  EvalSet one{{Ots{8, 17, 0, 9, 0}, Ots{8, 17, 0, 8, 0, 0, 0}, {}, std::nullopt}};
  CHECK(s_rl(one) == 0.75);
  // prediction far longer than the target: negative, unclamped
  Ots t{17};
  Ots p{17};
  for (int k = 0; k < 3; ++k) p.push_back(8);
  EvalSet neg{{p, t, {}, std::nullopt}};
  CHECK(s_rl(neg) == -2.0);
  EvalSet degenerate{{Ots{17}, Ots{0, 0, 0}, {}, std::nullopt}};
  try {
    (void)s_rl(degenerate);
    FAIL("expected DegenerateTarget");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_target);
  }
}

TEST_CASE("formula_s_rl") {
  EvalSet same{pair_of("L[2,1](x0)", "L[2,1](x0)")};
  CHECK(formula_s_rl(same, V()) == 1.0);
  EvalSet broken{{Ots{4, 17}, encode_bfs(parse_tree("x0", V())).ots, {}, std::nullopt}};
  CHECK(formula_s_rl(broken, V()) == 0.0);
  EvalSet commuted{pair_of("add(x0,C[1.5])", "add(C[1.5],x0)")};
  CHECK(commuted[0].prediction != commuted[0].target);
  CHECK(formula_s_rl(commuted, V()) == 1.0);
  // zero-filled prediction constants simplify to "x0", target "x0 + 1.5000"
  EvalSet zero_fill{commuted[0]};
  zero_fill[0].predicted_constants.reset();
  const double l = static_cast<double>(std::string("x0 + 1.5000").size());
  CHECK(formula_s_rl(zero_fill, V()) == doctest::Approx((l - 9.0) / l));
  zero_fill[0].predicted_constants = ConstArray{1.5, 2.5};  // wrong length: zero-filled
  CHECK(formula_s_rl(zero_fill, V()) == doctest::Approx((l - 9.0) / l));
}

TEST_CASE("unreconstructable summands are zero") {
  EvalSet omega;
  Rng rng(4, 0);
  for (int i = 0; i < 200; ++i) {
    Ots p(1 + rng.below(9));
    for (auto& t : p) t = static_cast<TokenId>(rng.below(19));
    omega.push_back({p, encode_bfs(parse_tree("sin(x0)", V())).ots, {}, std::nullopt});
  }
  for (const auto& pr : omega) {
    const PairTerms t = pair_terms(pr, V());
    if (t.reconstructable == 0.0) CHECK(t.formula == 0.0);
  }
}

TEST_CASE("identity on generated targets and serial agreement") {
  GenConfig cfg;
  cfg.n_vars = 2;
  TreeGenerator gen(V(), cfg);
  Rng rng(1, 0);
  EvalSet omega;
  for (int i = 0; i < 300; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    OpTree t = gen.assign_symbols(gen.sample_skeleton(r), r);
    t.set_constants(gen.sample_constants(t, r));
    const auto e = encode_bfs(t);
    omega.push_back({e.ots, e.ots, e.constants, e.constants});
  }
  const MetricReport m = evaluate_metrics(omega, V());
  CHECK(m.acc_r == 1.0);
  CHECK(m.s_rl == 1.0);
  CHECK(m.formula_s_rl == 1.0);
  CHECK(m.n == 300);
  // perturb half the predictions and compare parallel with serial
  for (std::size_t i = 0; i < omega.size(); i += 2) omega[i].prediction.resize(omega[i].prediction.size() / 2);
  const MetricReport a = evaluate_metrics(omega, V());
  const MetricReport b = evaluate_metrics_serial(omega, V());
  CHECK(a.acc_r == b.acc_r);
  CHECK(a.s_rl == b.s_rl);
  CHECK(a.formula_s_rl == b.formula_s_rl);
  CHECK(a.acc_r == acc_r(omega, V()));
  CHECK(a.s_rl == doctest::Approx(s_rl(omega)).epsilon(1e-14));
  CHECK(a.formula_s_rl == doctest::Approx(formula_s_rl(omega, V())).epsilon(1e-14));
  CHECK(a.acc_r < 1.0);
}

}
