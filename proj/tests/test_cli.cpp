#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "otsforge/cli.hpp"
#include "otsforge/csv.hpp"
#include "otsforge/dataset.hpp"

using namespace otsforge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::dispatch(args, out, err);
  return {status, out.str(), err.str()};
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("otsforge_cli_" + name); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_config() {
  const auto path = tmp("small.yaml");
  std::ofstream(path) << "version: 1\nseed: 7\n"
                         "counts: {n_skeletons: 3, assignments_per_skeleton: 4, "
                         "const_samples_per_ots: 5}\n";
  return path;
}

// Built once; the subcommand tests only read it.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const auto d = tmp("ds");
    fs::remove_all(d);
    const Run r = run({"gen-dataset", "--config", write_config().string(), "--output", d.string()});
    REQUIRE(r.status == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2 and name the flag") {
  Run r = run({"vocab-dump", "--frobnicate"});
  CHECK(r.status == cli::kUsageError);
  const auto e = json::parse(r.err);
  CHECK(e["error"] == "usage");
  CHECK(e["message"].get<std::string>().find("--frobnicate") != std::string::npos);
  CHECK(r.out.empty());

  CHECK(run({}).status == cli::kUsageError);
  CHECK(run({"explode"}).status == cli::kUsageError);
  CHECK(run({"fit", "--ots", "17,0,0"}).status == cli::kUsageError);
  CHECK(run({"solve", "--target", "x", "--source", "beam"}).status == cli::kUsageError);
  CHECK(run({"--threads", "0", "vocab-dump"}).status == cli::kUsageError);
  CHECK(run({"--log-level", "loud", "vocab-dump"}).status == cli::kUsageError);
  CHECK(run({"gen-dataset"}).status == cli::kUsageError);
  CHECK(run({"render", "--output", tmp("x.fimg").string()}).status == cli::kUsageError);

  r = run({"--help"});
  CHECK(r.status == 0);
  CHECK(r.out.find("gen-dataset") != std::string::npos);
}

TEST_CASE("domain errors exit 1 with structured json") {
  Run r = run({"fit", "--ots", "17,0,0", "--target", tmp("missing.fimg").string()});
  CHECK(r.status == cli::kDomainError);
  CHECK(json::parse(r.err)["error"] == "InvalidArgument");

  r = run({"--config", tmp("nope.yaml").string(), "vocab-dump"});
  CHECK(r.status == cli::kDomainError);
  CHECK(json::parse(r.err)["error"] == "IoError");

  r = run({"render", "--formula", "frob(x0)", "--output", tmp("x.fimg").string()});
  CHECK(r.status == cli::kDomainError);
  CHECK(json::parse(r.err)["error"] == "UnknownSymbol");

  r = run({"render", "--formula", "C[1]", "--output", tmp("x.fimg").string()});
  CHECK(r.status == cli::kDomainError);
  CHECK(json::parse(r.err)["error"] == "RationalityError");
}

TEST_CASE("vocab-dump") {
  const Run r = run({"vocab-dump"});
  REQUIRE(r.status == 0);
  CHECK(json::parse(r.out) == default_vocab().to_json());

  const auto cfg = tmp("ov.yaml");
  std::ofstream(cfg) << "vocab:\n  overrides:\n    - {name: sin, max_count: 1}\n";
  const Run o = run({"--config", cfg.string(), "vocab-dump"});
  REQUIRE(o.status == 0);
  CHECK(o.out != r.out);
}

TEST_CASE("gen-dataset and verify") {
  const auto& d = dataset();
  const auto manifest = json::parse(slurp(d / "manifest.json"));
  CHECK(manifest["pairs"].get<int>() + manifest["rejections"].get<int>() == 60);

  const auto again = tmp("ds_again");
  fs::remove_all(again);
  const Run r = run({"gen-dataset", "--config", write_config().string(), "--output", again.string()});
  REQUIRE(r.status == 0);
  CHECK(json::parse(r.out) == manifest);
  CHECK(slurp(again / "pairs.csv") == slurp(d / "pairs.csv"));
  CHECK(slurp(again / "shard-00000.fimg") == slurp(d / "shard-00000.fimg"));

  Run v = run({"verify", "--dataset", again.string()});
  CHECK(v.status == 0);
  CHECK(json::parse(v.out)["ok"] == true);

  auto bytes = slurp(again / "shard-00000.fimg");
  bytes[300] ^= 0x10;
  std::ofstream(again / "shard-00000.fimg", std::ios::binary | std::ios::trunc) << bytes;
  v = run({"verify", "--dataset", again.string()});
  CHECK(v.status == cli::kDomainError);
  CHECK(json::parse(v.out)["findings"][0]["kind"] == "crc_mismatch");
  CHECK(json::parse(v.err)["error"] == "verification_failed");
  fs::remove_all(again);
}

TEST_CASE("seed flag and environment fallback") {
  const auto a = tmp("seed_a"), b = tmp("seed_b"), c = tmp("seed_c");
  for (const auto& p : {a, b, c}) fs::remove_all(p);
  const auto cfg = write_config().string();
  REQUIRE(run({"--seed", "9", "gen-dataset", "--config", cfg, "--output", a.string()}).status == 0);
  ::setenv("OTSFORGE_SEED", "9", 1);
  const Run env = run({"gen-dataset", "--config", cfg, "--output", b.string()});
  ::unsetenv("OTSFORGE_SEED");
  REQUIRE(env.status == 0);
  REQUIRE(run({"gen-dataset", "--config", cfg, "--output", c.string()}).status == 0);
  CHECK(slurp(a / "pairs.csv") == slurp(b / "pairs.csv"));
  CHECK(slurp(a / "pairs.csv") != slurp(c / "pairs.csv"));
  CHECK(DatasetConfig::load(a / "config.yaml").seed == 9);
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST_CASE("fit a dataset pair") {
  const DatasetReader reader(dataset());
  const PairRecord& rec = reader.record(0);
  const std::vector<std::string> args{"--seed", "4", "fit", "--dataset", dataset().string(),
                                      "--target", rec.pair_id, "--ots", format_ots(rec.ots)};
  const Run r = run(args);
  REQUIRE(r.status == 0);
  const auto j = json::parse(r.out);
  CHECK(j["final_mse"].get<double>() < 1e-6);
  CHECK(j["constants"].size() == rec.constants.size());
  CHECK(run(args).out == r.out);

  const Run init = run({"fit", "--dataset", dataset().string(), "--target", rec.pair_id, "--ots",
                        format_ots(rec.ots), "--constants-init", format_constants(rec.constants),
                        "--restarts", "1", "--optimizer", "first_order", "--lr", "0.01"});
  REQUIRE(init.status == 0);
  CHECK(json::parse(init.out)["final_mse"].get<double>() < 1e-6);
}

TEST_CASE("render then solve a file target") {
  const auto img = tmp("target.fimg");
  Run r = run({"render", "--formula", "mul(x0,L[1.3,0.4](x0))", "--output", img.string()});
  REQUIRE(r.status == 0);
  CHECK(json::parse(r.out)["finite_fraction"] == 1.0);
  CHECK(read_fimg_file(img.string()).n_scales == 3);

  const std::vector<std::string> args{"--seed", "2", "solve", "--target", img.string(),
                                      "--node-budget", "4", "--k", "3"};
  r = run(args);
  REQUIRE(r.status == 0);
  const auto list = json::parse(r.out);
  REQUIRE(list.size() == 3);
  CHECK(list[0]["rank"] == 1);
  CHECK(list[0]["mse"].get<double>() < 1e-6);
  CHECK(list[2]["rank"] == 3);
  CHECK(run(args).out == r.out);

  const auto cands = tmp("cands.txt");
  const std::string truth = format_ots(encode_bfs(parse_tree("mul(x0,L(x0))", default_vocab())).ots);
  std::ofstream(cands) << "8,17,0,0,0\n" << truth << "\n";
  r = run({"solve", "--target", img.string(), "--source", "file", "--candidates-file",
           cands.string()});
  REQUIRE(r.status == 0);
  CHECK(json::parse(r.out)[0]["ots"] == truth);
  CHECK(run({"solve", "--target", img.string(), "--source", "file"}).status == cli::kUsageError);

  const auto noisy = tmp("noisy.fimg");
  REQUIRE(run({"--seed", "5", "render", "--ots", "8,17,0,0,0", "--noise-sigma", "0.1",
               "--output", noisy.string()}).status == 0);
  const FuncImg n = read_fimg_file(noisy.string());
  CHECK(n.noisy);
  for (float v : n.data) CHECK((v >= 0.0f && v <= 1.0f));
  fs::remove(img);
  fs::remove(cands);
  fs::remove(noisy);
}

TEST_CASE("solve with model candidates for a dataset pair") {
  const DatasetReader reader(dataset());
  const PairRecord& rec = reader.record(3);
  const auto path = tmp("model.csv");
  {
    std::ofstream out(path);
    csv::write_row(out, {"pair_id", "rank", "ots"});
    csv::write_row(out, {rec.pair_id, "2", format_ots(rec.ots)});
    csv::write_row(out, {rec.pair_id, "1", "8,17,0,0,0"});
    csv::write_row(out, {"other", "1", "9,17,0,0,0"});
  }
  const Run r = run({"solve", "--dataset", dataset().string(), "--target", rec.pair_id,
                     "--source", "model", "--candidates-file", path.string()});
  REQUIRE(r.status == 0);
  const auto list = json::parse(r.out);
  CHECK(list.size() <= 2);
  CHECK(list[0]["ots"] == format_ots(rec.ots));
  fs::remove(path);
}

TEST_CASE("eval predictions") {
  const DatasetReader reader(dataset());
  const auto path = tmp("pred.csv");
  {
    std::ofstream out(path);
    csv::write_row(out, {"pair_id", "ots", "constants"});
    for (const auto& rec : reader.pairs())
      csv::write_row(out, {rec.pair_id, format_ots(rec.ots), format_constants(rec.constants)});
  }
  Run r = run({"eval", "--dataset", dataset().string(), "--predictions", path.string()});
  REQUIRE(r.status == 0);
  auto j = json::parse(r.out);
  CHECK(j["acc_r"] == 1.0);
  CHECK(j["s_rl"] == 1.0);
  CHECK(j["formula_s_rl"] == 1.0);
  CHECK(j["n"] == reader.size());

  {
    std::ofstream out(path);
    csv::write_row(out, {"pair_id", "ots"});
    csv::write_row(out, {reader.record(0).pair_id, "1,17"});
  }
  r = run({"eval", "--dataset", dataset().string(), "--predictions", path.string()});
  REQUIRE(r.status == 0);
  j = json::parse(r.out);
  CHECK(j["acc_r"] == 0.0);
  CHECK(j["formula_s_rl"] == 0.0);

  {
    std::ofstream out(path);
    csv::write_row(out, {"pair_id", "ots"});
    csv::write_row(out, {"no-such-pair", "17,0,0"});
  }
  r = run({"eval", "--dataset", dataset().string(), "--predictions", path.string()});
  CHECK(r.status == cli::kDomainError);
  CHECK(json::parse(r.err)["error"] == "SchemaMismatch");
  fs::remove(path);
}

TEST_CASE("fit-bench writes a per-item csv") {
  const auto out = tmp("bench.csv");
  const std::vector<std::string> args{"--seed", "3", "fit-bench", "--dataset", dataset().string(),
                                      "--batch", "4", "--sets", "3", "--output", out.string()};
  const Run r = run(args);
  REQUIRE(r.status == 0);
  const auto j = json::parse(r.out);
  CHECK(j["lbfgs"]["n_ok"].get<int>() + j["lbfgs"]["n_failed"].get<int>() == 12);
  CHECK(j["first_order"]["learning_rate"] == 1.0);
  const auto table = csv::Table::read_file(out.string());
  table.require({"set", "item", "pair_id", "optimizer", "final_mse", "iterations", "status"});
  CHECK(table.rows().size() == 24);
  const std::string first = slurp(out);
  CHECK(run(args).out == r.out);
  CHECK(slurp(out) == first);
  CHECK(run({"fit-bench", "--dataset", dataset().string(), "--batch", "1000", "--output",
             out.string()}).status == cli::kDomainError);
  fs::remove(out);
}

}
