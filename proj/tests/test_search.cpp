#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "otsforge/search.hpp"
#include "otsforge/treegen.hpp"
#include "support/oracles.hpp"

using namespace otsforge;

namespace {
const Vocab& V() { return default_vocab(); }

Ots ots_of(const char* prefix) { return encode_bfs(parse_tree(prefix, V())).ots; }

FuncImg target_of(const char* prefix) { return render(parse_tree(prefix, V()), RenderConfig{}); }

std::vector<OpTree> five_node_trees(int count, std::uint64_t seed) {
  GenConfig cfg;
  cfg.node_min = cfg.node_max = 5;
  TreeGenerator gen(V(), cfg);
  Rng rng(seed, 0);
  std::vector<OpTree> out;
  for (int i = 0; i < count; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    out.push_back(gen.generate_valid_tree(r, RenderConfig{}));
  }
  return out;
}

std::filesystem::path temp_file(const char* name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_SUITE("search") {

TEST_CASE("leaves") {
  const auto one = enumerate_candidates(1, V(), 100);
  CHECK(one == std::vector<Ots>{{16, 0, 0}, {17, 0, 0}});
  CHECK(enumerate_candidates(1, V(), 100, 2).size() == 3);
  CHECK(enumerate_candidates(1, V(), 1).size() == 1);
}

TEST_CASE("counts match the recursive enumerator") {
  for (int n_vars : {1, 2})
    for (int budget : {1, 2, 3, 4}) {
      CAPTURE(n_vars);
      CAPTURE(budget);
      CHECK(enumerate_candidates(budget, V(), 1000000, n_vars).size() ==
            oracle::count_valid_trees(budget, n_vars));
    }
}

TEST_CASE("enumeration order and validity") {
  const auto all = enumerate_candidates(4, V(), 1000000);
  const std::set<Ots> unique(all.begin(), all.end());
  CHECK(unique.size() == all.size());
  int prev_size = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    REQUIRE(is_reconstructable(all[i], V()));
    auto d = try_decode_bfs(all[i], std::nullopt, V());
    CHECK(satisfies_constraints(*d.tree, V()));
    const int size = d.tree->size();
    CHECK(size >= prev_size);
    if (i > 0 && size == prev_size) CHECK(all[i - 1] < all[i]);
    prev_size = size;
  }
  const auto head = enumerate_candidates(4, V(), 100);
  CHECK(std::equal(head.begin(), head.end(), all.begin()));
}

TEST_CASE("enumeration arguments") {
  CHECK_THROWS_AS(enumerate_candidates(0, V(), 10), Error);
  CHECK_THROWS_AS(enumerate_candidates(kMaxEnumerationBudget + 1, V(), 10), Error);
  CHECK_THROWS_AS(enumerate_candidates(3, V(), 0), Error);
  CHECK_THROWS_AS(enumerate_candidates(3, V(), 10, 3), Error);
}

TEST_CASE("exhaustive solve recovers a five-node target") {
  const OpTree t = parse_tree("mul(x0,sin(L[1.2,0.5](x0)))", V());
  const auto candidates = enumerate_candidates(5, V(), kDefaultCandidateLimit);
  const SolveResult r = solve(render(t, RenderConfig{}), candidates, SolveConfig{}, V());
  REQUIRE(!r.solutions.empty());
  CHECK(r.solutions[0].fit.final_mse < 1e-6);
  CHECK(r.solutions[0].rank == 1);
  CHECK(r.diagnostics.candidates == candidates.size());
  CHECK(r.diagnostics.irrational > 0);
}

TEST_CASE("true skeleton beats distractors") {
  const char* truth = "mul(x0,sin(L[1.2,0.5](x0)))";
  const char* distractors[] = {"sin(x0)",          "exp(mul(C[0.5],x0))", "mul(x0,x0)",
                               "cos(mul(C[2],x0))", "add(x0,sin(x0))",     "sqrt(abs(x0))",
                               "tan(x0)",           "div(C[1],x0)",        "mul(x0,cos(x0))"};
  std::string body = "# candidates\n\n";
  for (int i = 0; i < 9; ++i) {
    body += format_ots(ots_of(distractors[i])) + "\n";
    if (i == 4) body += format_ots(ots_of(truth)) + "\n";
  }
  const auto path = temp_file("otsforge_candidates.txt", body);
  CandidateSource src;
  src.kind = SourceKind::file;
  src.path = path;
  CHECK(load_candidates(src, V()).size() == 10);
  SolveConfig cfg;
  cfg.k = 20;
  const SolveResult r = solve(target_of(truth), src, cfg, V());
  CHECK(r.solutions[0].ots == ots_of(truth));
  CHECK(r.solutions[0].fit.final_mse < 1e-6);
  CHECK(r.solutions[1].fit.final_mse > 1e-3);
  std::filesystem::remove(path);
}

TEST_CASE("rank one whenever the true skeleton fits") {
  const auto trees = five_node_trees(50, 505);
  const auto distractors = five_node_trees(5, 606);
  SolveConfig cfg;
  cfg.k = 10;
  int fitted = 0, outranked = 0;
  for (const auto& t : trees) {
    std::vector<Ots> candidates;
    for (const auto& d : distractors) candidates.push_back(encode_bfs(d).ots);
    const Ots truth = encode_bfs(t).ots;
    candidates.insert(candidates.begin() + 2, truth);
    const SolveResult r = solve(render(t, RenderConfig{}), candidates, cfg, V());
    const auto it = std::find_if(r.solutions.begin(), r.solutions.end(),
                                 [&](const Solution& s) { return s.ots == truth; });
    if (it == r.solutions.end() || it->fit.final_mse >= 1e-6) continue;
    ++fitted;
    CAPTURE(to_prefix(t, V()));
    // Only MSE-equivalent candidates that are at least as short may precede it.
    for (auto s = r.solutions.begin(); s != it; ++s) {
      CHECK(s->fit.final_mse <= cfg.tie_floor);
      CHECK(it->fit.final_mse <= cfg.tie_floor);
      CHECK(strip_trailing_end(s->ots).size() <= strip_trailing_end(truth).size());
    }
    if (it->rank != 1) ++outranked;
  }
  CHECK(fitted >= 40);
  CHECK(outranked <= fitted / 2);
}

TEST_CASE("ranking and ties") {
  const FuncImg target = target_of("x0");
  const std::vector<Ots> candidates{ots_of("sub(x0,C[0])"), ots_of("mul(C[1],x0)"),
                                    ots_of("add(x0,C[0])"), ots_of("x0"), ots_of("sin(x0)")};
  SolveConfig cfg;
  cfg.k = 10;
  const SolveResult r = solve(target, candidates, cfg, V());
  REQUIRE(r.solutions.size() == 5);
  CHECK(r.solutions[0].ots == ots_of("x0"));
  CHECK(r.solutions[0].formula == "x0");
  // equal length: add (1) sorts before mul (3) and sub (2)
  CHECK(r.solutions[1].ots == ots_of("add(x0,C[0])"));
  CHECK(r.solutions[2].ots == ots_of("sub(x0,C[0])"));
  CHECK(r.solutions[3].ots == ots_of("mul(C[1],x0)"));
  CHECK(r.solutions[4].ots == ots_of("sin(x0)"));
  CHECK(r.solutions[4].fit.final_mse > 1e-6);
  for (std::size_t i = 0; i < r.solutions.size(); ++i)
    CHECK(r.solutions[i].rank == static_cast<int>(i) + 1);
  for (std::size_t i = 1; i < r.solutions.size(); ++i)
    CHECK(std::max(r.solutions[i - 1].fit.final_mse, cfg.tie_floor) <=
          std::max(r.solutions[i].fit.final_mse, cfg.tie_floor));

  cfg.k = 2;
  CHECK(solve(target, candidates, cfg, V()).solutions.size() == 2);
}

TEST_CASE("diagnostics and failures") {
  const FuncImg target = target_of("sin(x0)");
  const std::vector<Ots> candidates{Ots{4, 17}, ots_of("x1"), ots_of("C"),
                                    ots_of("log(x0)"), ots_of("cos(x0)")};
  SolveConfig cfg;
  const SolveResult r = solve(target, candidates, cfg, V());
  CHECK(r.diagnostics.candidates == 5);
  CHECK(r.diagnostics.reconstruction_failed == 2);
  CHECK(r.diagnostics.irrational == 1);
  CHECK(r.diagnostics.mask_mismatch == 1);
  REQUIRE(r.solutions.size() == 1);
  CHECK(r.solutions[0].ots == ots_of("cos(x0)"));

  CHECK_THROWS_AS(solve(target, std::vector<Ots>{}, cfg, V()), Error);
  try {
    (void)solve(target, std::vector<Ots>{Ots{4, 17}, ots_of("C")}, cfg, V());
    FAIL("expected NoCandidates");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::no_candidates);
  }
  cfg.k = 0;
  CHECK_THROWS_AS(solve(target, candidates, cfg, V()), Error);
}

TEST_CASE("model candidates csv") {
  const auto path = temp_file("otsforge_model.csv",
                              "pair_id,rank,ots\n"
                              "p1,2,\"11,17,0,0,0\"\n"
                              "p2,1,\"17,0,0\"\n"
                              "p1,1,\"8,17,0,0,0\"\n"
                              "p1,3,\"9,17,0,0,0\"\n");
  CandidateSource src;
  src.kind = SourceKind::model;
  src.path = path;
  src.pair_id = "p1";
  CHECK(load_candidates(src, V()) ==
        std::vector<Ots>{{8, 17, 0, 0, 0}, {11, 17, 0, 0, 0}, {9, 17, 0, 0, 0}});
  src.budget = 2;
  CHECK(load_candidates(src, V()).size() == 2);
  src.pair_id.reset();
  src.budget = 100;
  CHECK(load_candidates(src, V()).size() == 4);

  const SolveResult r = solve(target_of("exp(x0)"), src, SolveConfig{}, V());
  CHECK(r.solutions[0].ots == Ots{11, 17, 0, 0, 0});

  const auto bad = temp_file("otsforge_model_bad.csv", "pair_id,ots\np1,\"17,0,0\"\n");
  src.path = bad;
  CHECK_THROWS_AS(load_candidates(src, V()), Error);
  src.path = std::filesystem::temp_directory_path() / "otsforge_missing.csv";
  CHECK_THROWS_AS(load_candidates(src, V()), Error);
  src.path.clear();
  CHECK_THROWS_AS(load_candidates(src, V()), Error);
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}

TEST_CASE("source kinds") {
  CHECK(source_kind_from_string("enumerate") == SourceKind::enumerate);
  CHECK(source_kind_from_string("model") == SourceKind::model);
  CHECK(to_string(SourceKind::file) == "file");
  CHECK_THROWS_AS(source_kind_from_string("beam"), Error);
}

TEST_CASE("deterministic") {
  const FuncImg target = target_of("mul(x0,exp(L[-0.3,0](x0)))");
  const auto candidates = enumerate_candidates(4, V(), kDefaultCandidateLimit);
  SolveConfig cfg;
  const SolveResult a = solve(target, candidates, cfg, V());
  const SolveResult b = solve(target, candidates, cfg, V());
  REQUIRE(a.solutions.size() == b.solutions.size());
  for (std::size_t i = 0; i < a.solutions.size(); ++i) {
    CHECK(a.solutions[i].ots == b.solutions[i].ots);
    CHECK(a.solutions[i].fit.constants == b.solutions[i].fit.constants);
  }
}

}
