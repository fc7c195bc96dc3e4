#include <doctest.h>

#include <cmath>

#include "otsforge/optree.hpp"
#include "otsforge/rng.hpp"
#include "otsforge/treegen.hpp"

using namespace otsforge;

namespace {

const Vocab& V() { return default_vocab(); }

Ots ids(std::initializer_list<const char*> names) {
  Ots out;
  for (const char* n : names)
    out.push_back(std::string_view(n) == "end" ? kEndToken : V().lookup(n).token_id);
  return out;
}

ReconstructionReason reason_of(const Ots& ots, std::optional<ConstArray> consts) {
  std::optional<std::span<const double>> c;
  if (consts) c = std::span<const double>(*consts);
  auto r = try_decode_bfs(ots, c, V());
  REQUIRE_FALSE(r.ok());
  return r.reason;
}

}  // namespace

TEST_SUITE("optree") {

TEST_CASE("build validates arity and constants") {
  CHECK_THROWS_AS(OpTree::build({V().lookup("add").token_id, {}, {{17, {}, {}}}}, V()), Error);
  CHECK_THROWS_AS(OpTree::build({16, {1.0, 2.0}, {}}, V()), Error);
  const OpTree l = OpTree::build({15, {}, {{17, {}, {}}}}, V());
  REQUIRE(l.n_constants() == 2);
  CHECK(l.constants()[0] == 1.0);
  CHECK(l.constants()[1] == 0.0);
}

TEST_CASE("bfs storage order") {
  const OpTree t = parse_tree("add(sin(x0),mul(C[2],x0))", V());
  REQUIRE(t.size() == 6);
  for (int i = 1; i < t.size(); ++i) CHECK(t.node(i).parent < i);
  CHECK(t.node(1).kind == OpKind::sin);
  CHECK(t.node(2).kind == OpKind::mul);
  CHECK(t.node(3).kind == OpKind::variable);
  CHECK(t.node(4).kind == OpKind::constant);
  CHECK(t.constants()[0] == 2.0);
}

TEST_CASE("worked example L(cos(x0*C))") {
  const OpTree t = parse_tree("L(cos(mul(x0,C[2.4242])))", V());
  const Encoded e = encode_bfs(t);
  CHECK(e.ots == ids({"L", "cos", "end", "mul", "end", "x0", "C", "end", "end", "end", "end"}));
  CHECK(e.constants == ConstArray{1.0, 0.0, 2.4242});
  std::vector<std::string> non_end;
  for (const auto& n : token_names(e.ots, V()))
    if (n != "end") non_end.push_back(n);
  CHECK(non_end == std::vector<std::string>{"L", "cos", "mul", "x0", "C"});
}

TEST_CASE("linear over division") {
  const OpTree t = parse_tree("L[-1.15,-1.13](div(x0,x1))", V());
  const Encoded e = encode_bfs(t);
  CHECK(e.ots == ids({"L", "div", "end", "x0", "x1", "end", "end", "end", "end"}));
  CHECK(e.constants == ConstArray{-1.15, -1.13});
  const OpTree back = decode_bfs(e.ots, e.constants, V());
  CHECK(back == t);
  CHECK(to_prefix(back, V()) == "L[-1.15,-1.13](div(x0,x1))");
}

TEST_CASE("single leaf") {
  const OpTree t = parse_tree("x0", V());
  const Encoded e = encode_bfs(t);
  CHECK(Ots(strip_trailing_end(e.ots).begin(), strip_trailing_end(e.ots).end()) == ids({"x0"}));
  CHECK(e.constants.empty());
  CHECK(decode_bfs(ids({"x0"}), {}, V()) == t);
  CHECK(is_reconstructable(ids({"x0"}), V()));
  CHECK(is_reconstructable(e.ots, V()));
}

TEST_CASE("decode failures") {
  CHECK(reason_of(ids({"div", "x0"}), std::nullopt) == ReconstructionReason::truncated);
  CHECK(reason_of(ids({"cos", "x0", "end", "end", "end"}), ConstArray{5.0}) ==
        ReconstructionReason::constant_count_mismatch);
  CHECK(reason_of({}, std::nullopt) == ReconstructionReason::empty_sequence);
  CHECK(reason_of({0, 0}, std::nullopt) == ReconstructionReason::empty_sequence);
  CHECK(reason_of({17, 99}, std::nullopt) == ReconstructionReason::unknown_token);
  CHECK(reason_of({17, 19}, std::nullopt) == ReconstructionReason::unknown_token);
  // unary node must leave its second slot empty
  CHECK(reason_of(ids({"cos", "x0", "x0"}), std::nullopt) == ReconstructionReason::slot_mismatch);
  // leaf slots must be empty
  CHECK(reason_of(ids({"x0", "x0"}), std::nullopt) == ReconstructionReason::slot_mismatch);
  // binary slot left empty
  CHECK(reason_of(ids({"add", "x0", "end"}), std::nullopt) == ReconstructionReason::slot_mismatch);
  CHECK(reason_of(ids({"x0", "end", "end", "cos"}), std::nullopt) ==
        ReconstructionReason::trailing_tokens);
  CHECK_THROWS_AS(decode_bfs(ids({"div", "x0"}), {}, V()), ReconstructionError);
}

TEST_CASE("is_reconstructable examples") {
  CHECK(is_reconstructable(ids({"L", "div", "end", "x0", "x1", "end", "end", "end", "end"}), V()));
  CHECK_FALSE(is_reconstructable(ids({"div", "x0"}), V()));
  CHECK_FALSE(is_reconstructable({}, V()));
  // padding beyond the final level is accepted
  CHECK(is_reconstructable(ids({"x0", "end", "end", "end", "end"}), V()));
  CHECK(constant_slots(ids({"L", "C", "end", "end", "end"}), V()) == 3);
  CHECK_FALSE(constant_slots(ids({"div", "x0"}), V()).has_value());
}

TEST_CASE("zero-filled decode") {
  auto r = try_decode_bfs(ids({"L", "C", "end", "end", "end"}), std::nullopt, V());
  REQUIRE(r.ok());
  CHECK(r.tree->n_constants() == 3);
  for (double c : r.tree->constants()) CHECK(c == 0.0);
}

TEST_CASE("decode is total on random sequences") {
  Rng rng(11, 0);
  int ok = 0;
  for (int trial = 0; trial < 20000; ++trial) {
    Ots ots(rng.below(24));
    for (auto& t : ots) t = static_cast<TokenId>(rng.below(26)) - 1;
    DecodeResult r;
    CHECK_NOTHROW(r = try_decode_bfs(ots, std::nullopt, V()));
    if (r.ok()) {
      ++ok;
      const Encoded e = encode_bfs(*r.tree);
      CHECK(strip_trailing_end(e.ots).size() == strip_trailing_end(ots).size());
    }
  }
  CHECK(ok > 0);
}

TEST_CASE("round trip over generated trees") {
  GenConfig cfg;
  cfg.n_vars = 2;
  TreeGenerator gen(V(), cfg);
  Rng rng(5, 0);
  for (int i = 0; i < 2000; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    OpTree t = gen.assign_symbols(gen.sample_skeleton(r), r);
    t.set_constants(gen.sample_constants(t, r));
    const Encoded e = encode_bfs(t);
    CHECK(e.ots.size() == 1 + 2 * static_cast<std::size_t>(t.size()));
    const OpTree back = decode_bfs(e.ots, e.constants, V());
    REQUIRE(back == t);
  }
}

TEST_CASE("prefix notation") {
  const OpTree t = parse_tree("pow(add(x0,x1),C[2])", V());
  CHECK(to_prefix(t, V()) == "pow(add(x0,x1),C[2])");
  CHECK(parse_tree(to_prefix(t, V()), V()) == t);
  CHECK_THROWS_AS(parse_tree("add(x0", V()), Error);
  CHECK_THROWS_AS(parse_tree("foo(x0)", V()), Error);
  CHECK_THROWS_AS(parse_tree("x0 x1", V()), Error);
}

TEST_CASE("text forms") {
  CHECK(format_ots(Ots{15, 4, 0, 17}) == "15,4,0,17");
  CHECK(parse_ots("15,4,0,17") == Ots{15, 4, 0, 17});
  CHECK(parse_ots("").empty());
  CHECK_THROWS_AS(parse_ots("1,x"), Error);
  const ConstArray c{-1.15, 2.4242, 1.0 / 3.0};
  CHECK(format_constants(c) == "-1.15,2.4242,0.333333333");
  const float f = 0.1f;
  CHECK(static_cast<float>(parse_constants(format_constants(ConstArray{f}))[0]) == f);
  CHECK(parse_constants("").empty());
}

TEST_CASE("constants access") {
  OpTree t = parse_tree("add(L[2,3](x0),C[4])", V());
  CHECK(t.node_constants(1).size() == 2);
  CHECK(t.node_constants(2)[0] == 4.0);
  CHECK_THROWS_AS(t.set_constants(ConstArray{1.0}), Error);
  t.set_constants(ConstArray{5, 6, 7});
  CHECK(to_prefix(t, V()) == "add(L[5,6](x0),C[7])");
  CHECK(t.max_var_index() == 0);
}

}
