#include "otsforge/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#ifdef OTSFORGE_HAVE_OPENMP
#include <omp.h>
#endif

#include "otsforge/csv.hpp"
#include "otsforge/dataset.hpp"
#include "otsforge/fitter.hpp"
#include "otsforge/formula.hpp"
#include "otsforge/metrics.hpp"
#include "otsforge/search.hpp"

namespace otsforge::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  int threads = 0;
  std::string log_level = "warn";
};

// Fit flags shared by fit and solve.
struct FitFlags {
  std::string optimizer;
  double lr = 0;
  double stop_delta = 0;
  int max_iters = 0;
  int restarts = 0;
  int screen_samples = 0;
  std::vector<CLI::Option*> opts;

  void add(CLI::App* app) {
    opts = {app->add_option("--optimizer", optimizer, "lbfgs or first_order")
                ->check(CLI::IsMember({"lbfgs", "first_order"})),
            app->add_option("--lr", lr, "learning rate / initial step"),
            app->add_option("--stop-delta", stop_delta, "successive-loss stop threshold"),
            app->add_option("--max-iters", max_iters),
            app->add_option("--restarts", restarts),
            app->add_option("--screen-samples", screen_samples,
                            "loss-only samples seeding the restarts")};
  }

  void apply(FitConfig& cfg) const {
    if (opts[0]->count()) cfg.optimizer = optimizer_from_string(optimizer);
    if (opts[1]->count()) cfg.learning_rate = lr;
    if (opts[2]->count()) cfg.stop_delta = stop_delta;
    if (opts[3]->count()) cfg.max_iters = max_iters;
    if (opts[4]->count()) cfg.restarts = restarts;
    if (opts[5]->count()) cfg.screen_samples = screen_samples;
  }
};

std::optional<DatasetConfig> load_config(const Globals& g) {
  if (g.config.empty()) return std::nullopt;
  return DatasetConfig::load(g.config);
}

Vocab vocab_of(const std::optional<DatasetConfig>& cfg) {
  return cfg ? default_vocab().with_overrides(cfg->vocab_overrides) : default_vocab();
}

json to_json(const FitResult& r) {
  json j;
  j["constants"] = r.constants;
  j["final_mse"] = r.final_mse;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["stop_reason"] = std::string(to_string(r.stop_reason));
  j["restart_index"] = r.restart_index;
  j["evaluations"] = r.evaluations;
  j["restart_mse"] = r.restart_mse;
  j["history"] = r.history;
  return j;
}

struct Target {
  FuncImg image;
  std::optional<std::string> pair_id;
  Vocab vocab = default_vocab();
};

// A pair_id of --dataset, else a FIMG file whose scales come from --config.
Target resolve_target(const std::string& spec, const std::string& dataset,
                      const std::optional<DatasetConfig>& cfg) {
  Target t;
  if (!dataset.empty()) {
    const DatasetReader reader(dataset);
    if (const auto i = reader.find(spec)) {
      t.image = reader.image(*i);
      t.pair_id = spec;
      t.vocab = default_vocab().with_overrides(reader.config().vocab_overrides);
      return t;
    }
  }
  if (!fs::exists(spec))
    throw Error(ErrorKind::invalid_argument,
                fmt::format("target '{}' is neither a pair_id{} nor a file", spec,
                            dataset.empty() ? " (no --dataset)" : ""));
  t.image = read_fimg_file(spec);
  const RenderConfig rc = cfg ? cfg->render : RenderConfig{};
  if (static_cast<std::size_t>(t.image.n_scales) != rc.scales.size())
    throw Error(ErrorKind::schema_mismatch,
                fmt::format("target has {} scales, the render config {}", t.image.n_scales,
                            rc.scales.size()));
  t.image.scales = rc.scales;
  t.vocab = vocab_of(cfg);
  return t;
}

void write_json(std::ostream& out, const json& j) { out << j.dump(2) << "\n"; }

std::string num(double v) { return fmt::format("{}", v); }

// ---------------------------------------------------------------- subcommands

int run_gen_dataset(const Globals& g, const std::string& output, std::ostream& out) {
  if (g.config.empty()) throw UsageError("gen-dataset requires --config");
  DatasetConfig cfg = DatasetConfig::load(g.config);
  if (g.seed_opt->count()) cfg.seed = g.seed;
  if (!output.empty()) cfg.output_dir = output;
  if (cfg.output_dir.empty()) throw UsageError("gen-dataset needs --output or output_dir in the config");
  const DatasetManifest m = build_dataset(cfg);
  write_json(out, json::parse(std::ifstream(m.dir / "manifest.json")));
  return kOk;
}

int run_render(const Globals& g, const std::string& formula, const std::string& ots,
               const std::string& constants, const std::string& output,
               CLI::Option* noise_opt, double noise_sigma, std::ostream& out) {
  if (formula.empty() == ots.empty()) throw UsageError("render needs exactly one of --formula, --ots");
  const auto cfg = load_config(g);
  const Vocab vocab = vocab_of(cfg);
  OpTree tree;
  if (!formula.empty()) {
    tree = parse_tree(formula, vocab);
  } else {
    const Ots seq = parse_ots(ots);
    if (constants.empty()) {
      auto d = try_decode_bfs(seq, std::nullopt, vocab);
      if (!d.ok()) throw ReconstructionError(d.reason, d.detail);
      tree = std::move(*d.tree);
    } else {
      tree = decode_bfs(seq, parse_constants(constants), vocab);
    }
  }
  RenderConfig rc = cfg ? cfg->render : RenderConfig{};
  rc.n_vars = std::max(rc.n_vars, tree.max_var_index() + 1);
  if (noise_opt->count()) rc.noise_sigma = noise_sigma;
  rc.noise_seed = g.seed;
  const FuncImg img = render(tree, rc);
  write_fimg_file(output, img);
  std::size_t finite = 0;
  for (auto m : img.mask) finite += m;
  json j;
  j["output"] = output;
  j["formula"] = render_formula(tree);
  j["n_scales"] = img.n_scales;
  j["resolution"] = img.resolution;
  j["n_vars"] = img.n_vars;
  j["finite_fraction"] = static_cast<double>(finite) / static_cast<double>(img.mask.size());
  j["checksum"] = fmt::format("{:08x}", crc32(encode_fimg(img)));
  write_json(out, j);
  return kOk;
}

int run_fit(const Globals& g, const FitFlags& flags, const std::string& ots,
            const std::string& init, const std::string& target_spec, const std::string& dataset,
            std::ostream& out) {
  const auto cfg = load_config(g);
  const Target target = resolve_target(target_spec, dataset, cfg);
  FitConfig fc;
  flags.apply(fc);
  fc.seed = g.seed;
  if (!init.empty()) fc.initial_constants = parse_constants(init);
  const FitResult r = fit(parse_ots(ots), target.image, fc, target.vocab);
  write_json(out, to_json(r));
  return kOk;
}

struct BenchFlags {
  std::string dataset;
  std::string output;
  int batch = 20;
  int sets = 50;
  double lr_lbfgs = 1.0;
  double lr_first_order = 1.0;
  double stop_delta = 1e-5;
  int max_iters = 200;
  int restarts = 1;
};

int run_fit_bench(const Globals& g, const BenchFlags& b, std::ostream& out) {
  if (b.batch < 1 || b.sets < 1) throw UsageError("--batch and --sets must be >= 1");
  const DatasetReader reader(b.dataset);
  const Vocab vocab = default_vocab().with_overrides(reader.config().vocab_overrides);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < reader.size(); ++i)
    if (constant_slots(reader.record(i).ots, vocab).value_or(0) > 0) pool.push_back(i);
  if (pool.size() < static_cast<std::size_t>(b.batch))
    throw Error(ErrorKind::invalid_argument,
                fmt::format("dataset has {} pairs with constants, batch needs {}", pool.size(),
                            b.batch));

  std::ofstream csv_out(b.output, std::ios::trunc);
  if (!csv_out) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", b.output));
  csv::write_row(csv_out, {"set", "item", "pair_id", "optimizer", "final_mse", "iterations", "status"});

  const std::pair<Optimizer, double> optimizers[] = {{Optimizer::lbfgs, b.lr_lbfgs},
                                                     {Optimizer::first_order, b.lr_first_order}};
  std::vector<double> pooled[2];
  std::size_t failed[2] = {0, 0};
  for (int s = 0; s < b.sets; ++s) {
    Rng rng(g.seed, 0xbe7c'0000ULL + static_cast<std::uint64_t>(s));
    std::vector<std::size_t> pick = pool;
    for (std::size_t i = 0; i < static_cast<std::size_t>(b.batch); ++i)
      std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
    pick.resize(static_cast<std::size_t>(b.batch));
    std::vector<BatchItem> items;
    for (auto i : pick) items.push_back({reader.record(i).ots, reader.image(i)});

    for (int o = 0; o < 2; ++o) {
      FitConfig fc;
      fc.optimizer = optimizers[o].first;
      fc.learning_rate = optimizers[o].second;
      fc.stop_delta = b.stop_delta;
      fc.max_iters = b.max_iters;
      fc.restarts = b.restarts;
      fc.screen_samples = 0;
      fc.seed = g.seed + static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(b.batch);
      const BatchOutcome res = fit_batch(items, fc, vocab);
      for (std::size_t i = 0; i < res.slots.size(); ++i) {
        const auto& slot = res.slots[i];
        const std::string name(to_string(fc.optimizer));
        const std::string& pid = reader.record(pick[i]).pair_id;
        if (slot.ok()) {
          pooled[o].push_back(slot.result->final_mse);
          csv::write_row(csv_out, {std::to_string(s), std::to_string(i), pid, name,
                                   num(slot.result->final_mse),
                                   std::to_string(slot.result->iterations), "ok"});
        } else {
          ++failed[o];
          csv::write_row(csv_out, {std::to_string(s), std::to_string(i), pid, name, "", "",
                                   std::string(to_string(slot.error_kind))});
        }
      }
    }
  }
  if (!csv_out) throw Error(ErrorKind::io, fmt::format("write failure on '{}'", b.output));

  json j;
  j["output"] = b.output;
  j["sets"] = b.sets;
  j["batch"] = b.batch;
  for (int o = 0; o < 2; ++o) {
    json e;
    e["learning_rate"] = optimizers[o].second;
    e["n_ok"] = pooled[o].size();
    e["n_failed"] = failed[o];
    if (!pooled[o].empty()) {
      e["median_mse"] = order_statistic(pooled[o], 0.5);
      e["q1_mse"] = order_statistic(pooled[o], 0.25);
      e["q3_mse"] = order_statistic(pooled[o], 0.75);
    }
    j[std::string(to_string(optimizers[o].first))] = e;
  }
  write_json(out, j);
  return kOk;
}

int run_eval(const std::string& dataset, const std::string& predictions, std::ostream& out) {
  const DatasetReader reader(dataset);
  const Vocab vocab = default_vocab().with_overrides(reader.config().vocab_overrides);
  const auto table = csv::Table::read_file(predictions);
  table.require({"pair_id", "ots"});
  const bool has_constants =
      std::find(table.header().begin(), table.header().end(), "constants") != table.header().end();
  EvalSet omega;
  for (std::size_t i = 0; i < table.rows().size(); ++i) {
    const std::string& pid = table.at(i, "pair_id");
    const auto idx = reader.find(pid);
    if (!idx)
      throw Error(ErrorKind::schema_mismatch,
                  fmt::format("predictions row {}: pair_id '{}' not in the dataset", i + 2, pid));
    const PairRecord& rec = reader.record(*idx);
    EvalPair p;
    p.prediction = parse_ots(table.at(i, "ots"));
    p.target = rec.ots;
    p.target_constants = rec.constants;
    if (has_constants && !table.at(i, "constants").empty())
      p.predicted_constants = parse_constants(table.at(i, "constants"));
    omega.push_back(std::move(p));
  }
  if (omega.empty()) throw Error(ErrorKind::invalid_argument, "predictions file has no rows");
  const MetricReport r = evaluate_metrics(omega, vocab);
  json j;
  j["acc_r"] = r.acc_r;
  j["s_rl"] = r.s_rl;
  j["formula_s_rl"] = r.formula_s_rl;
  j["n"] = r.n;
  write_json(out, j);
  return kOk;
}

struct SolveFlags {
  std::string target;
  std::string dataset;
  std::string source = "enumerate";
  int node_budget = 5;
  std::string candidates_file;
  std::string pair_id;
  int budget = kDefaultCandidateLimit;
  int k = 10;
  FitFlags fit;
};

int run_solve(const Globals& g, const SolveFlags& f, std::ostream& out) {
  const auto cfg = load_config(g);
  const Target target = resolve_target(f.target, f.dataset, cfg);
  CandidateSource src;
  src.kind = source_kind_from_string(f.source);
  src.budget = f.budget;
  src.node_budget = f.node_budget;
  src.n_vars = target.image.n_vars;
  src.path = f.candidates_file;
  if (!f.pair_id.empty())
    src.pair_id = f.pair_id;
  else if (src.kind == SourceKind::model)
    src.pair_id = target.pair_id;
  if (src.kind != SourceKind::enumerate && f.candidates_file.empty())
    throw UsageError(fmt::format("--source {} requires --candidates-file", f.source));
  SolveConfig sc;
  sc.k = f.k;
  f.fit.apply(sc.fit);
  sc.fit.seed = g.seed;
  sc.coarse.seed = g.seed;
  const SolveResult r = solve(target.image, src, sc, target.vocab);
  json list = json::array();
  for (const auto& s : r.solutions) {
    json e;
    e["rank"] = s.rank;
    e["ots"] = format_ots(s.ots);
    e["constants"] = s.fit.constants;
    e["formula"] = s.formula;
    e["mse"] = s.fit.final_mse;
    list.push_back(e);
  }
  write_json(out, list);
  const auto& d = r.diagnostics;
  spdlog::info("solve: {} candidates, {} fitted, {} refined, {} reconstruction, {} fit failures, "
               "{} irrational, {} mask mismatches",
               d.candidates, d.fitted, d.refined, d.reconstruction_failed, d.fit_failed,
               d.irrational, d.mask_mismatch);
  return kOk;
}

int run_verify(const std::string& dataset, std::ostream& out, std::ostream& err) {
  const VerifyReport rep = verify_dataset(dataset);
  json j;
  j["ok"] = rep.ok();
  j["pairs_checked"] = rep.pairs_checked;
  j["acc_r"] = rep.acc_r;
  j["findings"] = json::array();
  for (const auto& f : rep.findings)
    j["findings"].push_back({{"kind", std::string(to_string(f.kind))}, {"detail", f.detail}});
  write_json(out, j);
  if (rep.ok()) return kOk;
  json e;
  e["error"] = "verification_failed";
  e["message"] = fmt::format("{} finding(s) in {}", rep.findings.size(), dataset);
  err << e.dump() << "\n";
  return kDomainError;
}

void install_logger(const std::string& level) {
  static std::shared_ptr<spdlog::logger> logger = spdlog::stderr_color_mt("otsforge");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"otsforge: function images, constant fitting and symbolic regression"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Globals g;
  app.add_option("--config", g.config, "dataset config YAML");
  g.seed_opt = app.add_option("--seed", g.seed, "seed for randomized steps")->envname("OTSFORGE_SEED");
  app.add_option("--threads", g.threads, "worker threads (default: all)")->check(CLI::PositiveNumber);
  app.add_option("--log-level", g.log_level)
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  std::string gen_output;
  auto* gen = app.add_subcommand("gen-dataset", "build a dataset from --config");
  gen->add_option("--output", gen_output, "output directory (overrides output_dir)");

  std::string r_formula, r_ots, r_consts, r_output;
  double r_noise = 0;
  auto* rend = app.add_subcommand("render", "render a formula to a FIMG file");
  rend->add_option("--formula", r_formula, "prefix formula, e.g. mul(x0,sin(C[2]))");
  rend->add_option("--ots", r_ots, "comma-separated token ids");
  rend->add_option("--constants", r_consts, "comma-separated constants for --ots");
  rend->add_option("--output", r_output)->required();
  auto* r_noise_opt = rend->add_option("--noise-sigma", r_noise)->check(CLI::NonNegativeNumber);

  std::string f_ots, f_init, f_target, f_dataset;
  FitFlags f_flags;
  auto* fitc = app.add_subcommand("fit", "fit the constants of one OTS to a target");
  fitc->add_option("--ots", f_ots)->required();
  fitc->add_option("--constants-init", f_init);
  fitc->add_option("--target", f_target, "pair_id of --dataset or a FIMG path")->required();
  fitc->add_option("--dataset", f_dataset);
  f_flags.add(fitc);

  BenchFlags bench;
  auto* benchc = app.add_subcommand("fit-bench", "paired L-BFGS / first-order comparison");
  benchc->add_option("--dataset", bench.dataset)->required();
  benchc->add_option("--output", bench.output, "per-item CSV")->required();
  benchc->add_option("--batch", bench.batch);
  benchc->add_option("--sets", bench.sets);
  benchc->add_option("--lr-lbfgs", bench.lr_lbfgs);
  benchc->add_option("--lr-first-order", bench.lr_first_order);
  benchc->add_option("--stop-delta", bench.stop_delta);
  benchc->add_option("--max-iters", bench.max_iters);
  benchc->add_option("--restarts", bench.restarts);

  std::string e_dataset, e_predictions;
  auto* evalc = app.add_subcommand("eval", "score predictions against a dataset");
  evalc->add_option("--dataset", e_dataset)->required();
  evalc->add_option("--predictions", e_predictions, "CSV: pair_id, ots[, constants]")->required();

  SolveFlags sf;
  auto* solvec = app.add_subcommand("solve", "rank candidate skeletons for a target");
  solvec->add_option("--target", sf.target, "pair_id of --dataset or a FIMG path")->required();
  solvec->add_option("--dataset", sf.dataset);
  solvec->add_option("--source", sf.source)->check(CLI::IsMember({"enumerate", "file", "model"}));
  solvec->add_option("--node-budget", sf.node_budget);
  solvec->add_option("--candidates-file", sf.candidates_file);
  solvec->add_option("--pair-id", sf.pair_id, "model source: rows of this pair");
  solvec->add_option("--budget", sf.budget, "maximum candidates");
  solvec->add_option("--k", sf.k);
  sf.fit.add(solvec);

  std::string v_dataset;
  auto* verifyc = app.add_subcommand("verify", "check a dataset directory");
  verifyc->add_option("--dataset", v_dataset)->required();

  auto* vocabc = app.add_subcommand("vocab-dump", "print the vocab JSON");

  auto fail = [&](std::string_view kind, const std::string& message, int status) {
    json e;
    e["error"] = kind;
    e["message"] = message;
    err << e.dump() << "\n";
    return status;
  };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kUsageError);
  }

  try {
    install_logger(g.log_level);
#ifdef OTSFORGE_HAVE_OPENMP
    omp_set_num_threads(g.threads > 0 ? g.threads : omp_get_num_procs());
#endif
    if (*gen) return run_gen_dataset(g, gen_output, out);
    if (*rend) return run_render(g, r_formula, r_ots, r_consts, r_output, r_noise_opt, r_noise, out);
    if (*fitc) return run_fit(g, f_flags, f_ots, f_init, f_target, f_dataset, out);
    if (*benchc) return run_fit_bench(g, bench, out);
    if (*evalc) return run_eval(e_dataset, e_predictions, out);
    if (*solvec) return run_solve(g, sf, out);
    if (*verifyc) return run_verify(v_dataset, out, err);
    if (*vocabc) {
      out << vocab_of(load_config(g)).to_json().dump(2) << "\n";
      return kOk;
    }
    return fail("usage", "no subcommand", kUsageError);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), kUsageError);
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what(), kDomainError);
  } catch (const fs::filesystem_error& e) {
    return fail(to_string(ErrorKind::io), e.what(), kDomainError);
  } catch (const nlohmann::json::exception& e) {
    return fail(to_string(ErrorKind::schema_mismatch), e.what(), kDomainError);
  }
}

}  // namespace otsforge::cli
