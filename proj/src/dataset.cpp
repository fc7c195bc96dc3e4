#include "otsforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include "otsforge/csv.hpp"
#include "otsforge/formula.hpp"

namespace otsforge {

namespace fs = std::filesystem;

void DatasetConfig::validate() const {
  auto bad = [](const std::string& m) { return Error(ErrorKind::invalid_argument, "dataset: " + m); };
  gen.validate();
  render.validate();
  if (n_skeletons < 1 || assignments_per_skeleton < 1 || const_samples_per_ots < 1)
    throw bad("all counts must be >= 1");
  if (shard_size < 1) throw bad("shard_size must be >= 1");
  if (split.train < 0 || split.val < 0 || std::fabs(split.train + split.val - 1.0) > 1e-9)
    throw bad("split fractions must be non-negative and sum to 1");
  if (render.n_vars != gen.n_vars) throw bad("gen.n_vars and render.n_vars differ");
  (void)default_vocab().with_overrides(vocab_overrides);
}

// ------------------------------------------------------------ config YAML

namespace {

Error schema(const std::string& m) { return Error(ErrorKind::schema_mismatch, "config: " + m); }

void only_keys(const YAML::Node& node, std::initializer_list<std::string_view> keys,
               const std::string& where) {
  if (!node.IsMap()) throw schema(where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw schema(fmt::format("unknown key '{}' in {}", key, where));
  }
}

template <typename T>
void read(const YAML::Node& parent, const char* key, T& out, const std::string& where) {
  const YAML::Node n = parent[key];
  if (!n) return;
  try {
    out = n.as<T>();
  } catch (const YAML::Exception&) {
    throw schema(fmt::format("{}.{} has the wrong type", where, key));
  }
}

std::optional<int> read_limit(const YAML::Node& n, const std::string& where) {
  if (n.IsNull()) return std::nullopt;
  try {
    return n.as<int>();
  } catch (const YAML::Exception&) {
    throw schema(where + " must be an integer or null");
  }
}

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

DatasetConfig DatasetConfig::from_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw schema(e.what());
  }
  if (!root || root.IsNull()) throw schema("empty document");
  only_keys(root, {"version", "seed", "vocab", "gen", "render", "counts", "split", "output_dir"},
            "config");
  DatasetConfig cfg;
  int version = kDatasetVersion;
  read(root, "version", version, "config");
  if (version != kDatasetVersion)
    throw schema(fmt::format("unsupported version {} (expected {})", version, kDatasetVersion));
  read(root, "seed", cfg.seed, "config");
  if (const auto out = root["output_dir"]) cfg.output_dir = out.as<std::string>();

  if (const auto v = root["vocab"]) {
    only_keys(v, {"overrides"}, "vocab");
    if (const auto ovs = v["overrides"]) {
      if (!ovs.IsSequence()) throw schema("vocab.overrides must be a list");
      for (const auto& o : ovs) {
        only_keys(o, {"name", "max_consecutive", "max_count", "forbidden_adjacent"},
                  "vocab.overrides[]");
        ConstraintOverride ov;
        read(o, "name", ov.name, "vocab.overrides[]");
        if (ov.name.empty()) throw schema("vocab override without a name");
        if (const auto n = o["max_consecutive"]) ov.max_consecutive = read_limit(n, ov.name);
        if (const auto n = o["max_count"]) ov.max_count = read_limit(n, ov.name);
        if (const auto n = o["forbidden_adjacent"]) {
          std::vector<std::string> names;
          read(o, "forbidden_adjacent", names, ov.name);
          ov.forbidden_adjacent = std::set<std::string>(names.begin(), names.end());
        }
        cfg.vocab_overrides.push_back(std::move(ov));
      }
    }
  }
  if (const auto g = root["gen"]) {
    only_keys(g,
              {"node_min", "node_max", "n_vars", "const_range", "arity_weights",
               "min_linear_scale", "max_rejections"},
              "gen");
    read(g, "node_min", cfg.gen.node_min, "gen");
    read(g, "node_max", cfg.gen.node_max, "gen");
    read(g, "n_vars", cfg.gen.n_vars, "gen");
    read(g, "min_linear_scale", cfg.gen.min_linear_scale, "gen");
    read(g, "max_rejections", cfg.gen.max_rejections, "gen");
    if (g["const_range"]) {
      std::vector<double> r;
      read(g, "const_range", r, "gen");
      if (r.size() != 2) throw schema("gen.const_range needs two values");
      cfg.gen.const_lo = r[0];
      cfg.gen.const_hi = r[1];
    }
    if (g["arity_weights"]) {
      std::vector<double> w;
      read(g, "arity_weights", w, "gen");
      if (w.size() != 3) throw schema("gen.arity_weights needs three values");
      std::copy(w.begin(), w.end(), cfg.gen.arity_weights.begin());
    }
  }
  cfg.render.n_vars = cfg.gen.n_vars;
  if (const auto r = root["render"]) {
    only_keys(r,
              {"scales", "resolution", "noise_sigma", "min_finite_fraction", "min_variance"},
              "render");
    if (r["scales"]) {
      std::vector<std::vector<double>> scales;
      read(r, "scales", scales, "render");
      cfg.render.scales.clear();
      for (const auto& s : scales) {
        if (s.size() != 2) throw schema("render.scales entries need two values");
        cfg.render.scales.push_back({s[0], s[1]});
      }
    }
    read(r, "resolution", cfg.render.resolution, "render");
    read(r, "noise_sigma", cfg.render.noise_sigma, "render");
    read(r, "min_finite_fraction", cfg.render.min_finite_fraction, "render");
    read(r, "min_variance", cfg.render.min_variance, "render");
  }
  if (const auto c = root["counts"]) {
    only_keys(c,
              {"n_skeletons", "assignments_per_skeleton", "const_samples_per_ots", "shard_size"},
              "counts");
    read(c, "n_skeletons", cfg.n_skeletons, "counts");
    read(c, "assignments_per_skeleton", cfg.assignments_per_skeleton, "counts");
    read(c, "const_samples_per_ots", cfg.const_samples_per_ots, "counts");
    read(c, "shard_size", cfg.shard_size, "counts");
  }
  if (const auto s = root["split"]) {
    only_keys(s, {"train", "val"}, "split");
    read(s, "train", cfg.split.train, "split");
    read(s, "val", cfg.split.val, "split");
  }
  cfg.gen.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

DatasetConfig DatasetConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return from_yaml(ss.str());
}

std::string DatasetConfig::to_yaml() const {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "version" << YAML::Value << kDatasetVersion;
  out << YAML::Key << "seed" << YAML::Value << seed;

  out << YAML::Key << "vocab" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "overrides" << YAML::Value << YAML::BeginSeq;
  auto limit = [&](const std::optional<int>& v) {
    if (v)
      out << *v;
    else
      out << YAML::Null;
  };
  for (const auto& ov : vocab_overrides) {
    out << YAML::BeginMap << YAML::Key << "name" << YAML::Value << ov.name;
    if (ov.max_consecutive) {
      out << YAML::Key << "max_consecutive" << YAML::Value;
      limit(*ov.max_consecutive);
    }
    if (ov.max_count) {
      out << YAML::Key << "max_count" << YAML::Value;
      limit(*ov.max_count);
    }
    if (ov.forbidden_adjacent) {
      out << YAML::Key << "forbidden_adjacent" << YAML::Value << YAML::Flow << YAML::BeginSeq;
      for (const auto& n : *ov.forbidden_adjacent) out << n;
      out << YAML::EndSeq;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "gen" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "node_min" << YAML::Value << gen.node_min;
  out << YAML::Key << "node_max" << YAML::Value << gen.node_max;
  out << YAML::Key << "n_vars" << YAML::Value << gen.n_vars;
  out << YAML::Key << "const_range" << YAML::Value << YAML::Flow << YAML::BeginSeq
      << num(gen.const_lo) << num(gen.const_hi) << YAML::EndSeq;
  out << YAML::Key << "arity_weights" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double w : gen.arity_weights) out << num(w);
  out << YAML::EndSeq;
  out << YAML::Key << "min_linear_scale" << YAML::Value << num(gen.min_linear_scale);
  out << YAML::Key << "max_rejections" << YAML::Value << gen.max_rejections;
  out << YAML::EndMap;

  out << YAML::Key << "render" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "scales" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : render.scales)
    out << YAML::Flow << YAML::BeginSeq << num(s.lo) << num(s.hi) << YAML::EndSeq;
  out << YAML::EndSeq;
  out << YAML::Key << "resolution" << YAML::Value << render.resolution;
  out << YAML::Key << "noise_sigma" << YAML::Value << num(render.noise_sigma);
  out << YAML::Key << "min_finite_fraction" << YAML::Value << num(render.min_finite_fraction);
  out << YAML::Key << "min_variance" << YAML::Value << num(render.min_variance);
  out << YAML::EndMap;

  out << YAML::Key << "counts" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "n_skeletons" << YAML::Value << n_skeletons;
  out << YAML::Key << "assignments_per_skeleton" << YAML::Value << assignments_per_skeleton;
  out << YAML::Key << "const_samples_per_ots" << YAML::Value << const_samples_per_ots;
  out << YAML::Key << "shard_size" << YAML::Value << shard_size;
  out << YAML::EndMap;

  out << YAML::Key << "split" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "train" << YAML::Value << num(split.train);
  out << YAML::Key << "val" << YAML::Value << num(split.val);
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ------------------------------------------------------------ build

namespace {

constexpr std::uint64_t kSplitStream = 0x5350'4c49'5400'0000ULL;
constexpr std::uint64_t kNoiseSeedSalt = 0x4e4f'4953'4500'0000ULL;
// Shapes generated and written per round; bounds memory for large builds.
constexpr int kShapesPerRound = 256;

std::string hex32(std::uint32_t v) { return fmt::format("{:08x}", v); }

std::string shard_name(std::size_t k) { return fmt::format("shard-{:05d}.fimg", k); }

struct PairOut {
  std::int64_t skeleton_id;
  Ots ots;
  ConstArray constants;
  std::vector<std::uint8_t> block;
};

struct Rejection {
  std::int64_t skeleton_id;
  int const_sample;
  std::string reason;
};

struct ShapeOut {
  std::vector<csv::Row> skeleton_rows;
  std::vector<PairOut> pairs;
  std::vector<Rejection> rejections;
};

ShapeOut build_shape(const TreeGenerator& gen, const DatasetConfig& cfg, int shape) {
  ShapeOut out;
  Rng rng(cfg.seed, static_cast<std::uint64_t>(shape));
  const Skeleton sk = gen.sample_skeleton(rng);
  for (int a = 0; a < cfg.assignments_per_skeleton; ++a) {
    const std::int64_t id =
        static_cast<std::int64_t>(shape) * cfg.assignments_per_skeleton + a;
    OpTree tree = gen.assign_symbols(sk, rng);
    const Encoded enc = encode_bfs(tree);
    out.skeleton_rows.push_back({std::to_string(id), std::to_string(tree.size()),
                                 format_ots(enc.ots), render_skeleton(tree)});
    for (int c = 0; c < cfg.const_samples_per_ots; ++c) {
      ConstArray consts = gen.sample_constants(tree, rng);
      for (auto& v : consts) v = static_cast<double>(static_cast<float>(v));
      tree.set_constants(consts);
      RenderConfig rc = cfg.render;
      rc.noise_seed = Rng(cfg.seed ^ kNoiseSeedSalt, static_cast<std::uint64_t>(id))
                          .split(static_cast<std::uint64_t>(c))
                          .next_u64();
      try {
        const FuncImg img = render(tree, rc);
        out.pairs.push_back({id, enc.ots, std::move(consts), encode_fimg(img)});
      } catch (const RationalityError& e) {
        out.rejections.push_back({id, c, e.what()});
      }
    }
  }
  return out;
}

// One split label per shape, drawn by a seeded shuffle.
std::vector<bool> train_shapes(const DatasetConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.n_skeletons);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(cfg.seed, kSplitStream);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(
      std::clamp<long long>(std::llround(cfg.split.train * static_cast<double>(n)), 0,
                            static_cast<long long>(n)));
  std::vector<bool> train(n, false);
  for (std::size_t i = 0; i < n_train; ++i) train[order[i]] = true;
  return train;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode | std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path.string()));
  return f;
}

}  // namespace

DatasetManifest build_dataset(const DatasetConfig& cfg_in) {
  DatasetConfig cfg = cfg_in;
  cfg.gen.seed = cfg.seed;
  cfg.gen.overrides = cfg.vocab_overrides;
  cfg.validate();
  if (cfg.output_dir.empty()) throw Error(ErrorKind::invalid_argument, "dataset: output_dir is empty");
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec)
    throw Error(ErrorKind::io,
                fmt::format("cannot create '{}': {}", cfg.output_dir.string(), ec.message()));
  const fs::path& dir = cfg.output_dir;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".fimg" &&
        entry.path().filename().string().rfind("shard-", 0) == 0)
      fs::remove(entry.path());

  const TreeGenerator gen(default_vocab(), cfg.gen);
  const std::string config_text = cfg.to_yaml();
  open_out(dir / "config.yaml") << config_text;
  open_out(dir / "vocab.json") << gen.vocab().to_json().dump(2) << "\n";

  auto skeletons = open_out(dir / "skeletons.csv");
  auto pairs = open_out(dir / "pairs.csv");
  auto rejections = open_out(dir / "rejections.csv");
  csv::write_row(skeletons, {"skeleton_id", "node_count", "ots_template", "formula_skeleton"});
  csv::write_row(pairs, {"pair_id", "skeleton_id", "ots", "constants", "shard_file",
                         "shard_offset", "checksum"});
  csv::write_row(rejections, {"skeleton_id", "const_sample", "reason"});

  DatasetManifest m;
  m.dir = dir;
  m.shapes = static_cast<std::size_t>(cfg.n_skeletons);
  m.requested_pairs = m.shapes * static_cast<std::size_t>(cfg.assignments_per_skeleton) *
                      static_cast<std::size_t>(cfg.const_samples_per_ots);
  std::ofstream shard;
  std::uint64_t offset = 0;

  for (int base = 0; base < cfg.n_skeletons; base += kShapesPerRound) {
    const int count = std::min(kShapesPerRound, cfg.n_skeletons - base);
    std::vector<ShapeOut> round(static_cast<std::size_t>(count));
    std::vector<std::string> errors(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < count; ++i) {
      try {
        round[static_cast<std::size_t>(i)] = build_shape(gen, cfg, base + i);
      } catch (const Error& e) {
        errors[static_cast<std::size_t>(i)] = e.what();
      }
    }
    for (int i = 0; i < count; ++i)
      if (!errors[static_cast<std::size_t>(i)].empty())
        throw Error(ErrorKind::generation_exhausted,
                    fmt::format("skeleton {}: {}", base + i, errors[static_cast<std::size_t>(i)]));

    for (auto& shape : round) {
      for (const auto& row : shape.skeleton_rows) csv::write_row(skeletons, row);
      m.skeletons += shape.skeleton_rows.size();
      for (const auto& r : shape.rejections)
        csv::write_row(rejections,
                       {std::to_string(r.skeleton_id), std::to_string(r.const_sample), r.reason});
      m.rejections += shape.rejections.size();
      for (const auto& p : shape.pairs) {
        const std::size_t k = m.pairs / static_cast<std::size_t>(cfg.shard_size);
        if (m.pairs % static_cast<std::size_t>(cfg.shard_size) == 0) {
          if (shard.is_open()) shard.close();
          shard = open_out(dir / shard_name(k), std::ios::out | std::ios::binary);
          offset = 0;
          ++m.shards;
        }
        shard.write(reinterpret_cast<const char*>(p.block.data()),
                    static_cast<std::streamsize>(p.block.size()));
        csv::write_row(pairs, {std::to_string(m.pairs), std::to_string(p.skeleton_id),
                               format_ots(p.ots), format_constants(p.constants),
                               shard_name(k), std::to_string(offset), hex32(crc32(p.block))});
        offset += p.block.size();
        ++m.pairs;
      }
    }
  }
  if (shard.is_open()) shard.close();
  if (!shard || !pairs || !skeletons || !rejections)
    throw Error(ErrorKind::io, fmt::format("write failure in '{}'", dir.string()));

  const auto train = train_shapes(cfg);
  auto split = open_out(dir / "split.csv");
  csv::write_row(split, {"skeleton_id", "split"});
  for (std::size_t s = 0; s < train.size(); ++s) {
    for (int a = 0; a < cfg.assignments_per_skeleton; ++a)
      csv::write_row(split, {std::to_string(s * static_cast<std::size_t>(cfg.assignments_per_skeleton) +
                                            static_cast<std::size_t>(a)),
                             train[s] ? "train" : "val"});
    (train[s] ? m.train_skeletons : m.val_skeletons) +=
        static_cast<std::size_t>(cfg.assignments_per_skeleton);
  }

  const auto* bytes = reinterpret_cast<const std::uint8_t*>(config_text.data());
  nlohmann::ordered_json manifest;
  manifest["version"] = kDatasetVersion;
  manifest["config_crc32"] = hex32(crc32({bytes, config_text.size()}));
  manifest["shapes"] = m.shapes;
  manifest["skeletons"] = m.skeletons;
  manifest["requested_pairs"] = m.requested_pairs;
  manifest["pairs"] = m.pairs;
  manifest["rejections"] = m.rejections;
  manifest["shards"] = m.shards;
  manifest["shard_size"] = cfg.shard_size;
  manifest["train_skeletons"] = m.train_skeletons;
  manifest["val_skeletons"] = m.val_skeletons;
  open_out(dir / "manifest.json") << manifest.dump(2) << "\n";
  spdlog::info("dataset: {} pairs ({} rejected) from {} skeletons in {}", m.pairs, m.rejections,
               m.skeletons, dir.string());
  return m;
}

// ------------------------------------------------------------ reader

namespace {

std::uint32_t parse_hex32(const std::string& s) {
  std::size_t used = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &used, 16);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || v > 0xffffffffUL)
    throw Error(ErrorKind::schema_mismatch, fmt::format("bad checksum '{}'", s));
  return static_cast<std::uint32_t>(v);
}

template <typename T>
T parse_int(const std::string& s, const char* what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty() || v < 0)
    throw Error(ErrorKind::schema_mismatch, fmt::format("bad {} '{}'", what, s));
  return static_cast<T>(v);
}

std::vector<PairRecord> parse_pairs(const csv::Table& t) {
  t.require({"pair_id", "skeleton_id", "ots", "constants", "shard_file", "shard_offset",
             "checksum"});
  std::vector<PairRecord> out;
  out.reserve(t.rows().size());
  for (std::size_t i = 0; i < t.rows().size(); ++i) {
    PairRecord r;
    r.pair_id = t.at(i, "pair_id");
    r.skeleton_id = parse_int<std::int64_t>(t.at(i, "skeleton_id"), "skeleton_id");
    r.ots = parse_ots(t.at(i, "ots"));
    r.constants = parse_constants(t.at(i, "constants"));
    r.shard_file = t.at(i, "shard_file");
    r.shard_offset = parse_int<std::uint64_t>(t.at(i, "shard_offset"), "shard_offset");
    r.checksum = parse_hex32(t.at(i, "checksum"));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::uint8_t> read_block(const fs::path& dir, const PairRecord& r, std::size_t size) {
  if (r.shard_file.find('/') != std::string::npos || r.shard_file.find('\\') != std::string::npos)
    throw Error(ErrorKind::schema_mismatch, fmt::format("shard path '{}' leaves the dataset", r.shard_file));
  std::ifstream in(dir / r.shard_file, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("missing shard '{}'", r.shard_file));
  in.seekg(static_cast<std::streamoff>(r.shard_offset));
  std::vector<std::uint8_t> block(size);
  in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(size));
  if (static_cast<std::size_t>(in.gcount()) != size)
    throw Error(ErrorKind::corrupt_shard,
                fmt::format("pair {}: short read at {}+{}", r.pair_id, r.shard_file, r.shard_offset));
  return block;
}

FuncImg checked_image(const fs::path& dir, const PairRecord& r, const DatasetConfig& cfg) {
  auto block = read_block(dir, r, fimg_block_size(static_cast<int>(cfg.render.scales.size()),
                                                  cfg.render.resolution));
  if (crc32(block) != r.checksum)
    throw Error(ErrorKind::corrupt_shard,
                fmt::format("pair {}: CRC mismatch in {} at {}", r.pair_id, r.shard_file,
                            r.shard_offset));
  FuncImg img = decode_fimg(block);
  img.scales = cfg.render.scales;
  return img;
}

}  // namespace

DatasetReader::DatasetReader(const fs::path& dir) : dir_(dir) {
  config_ = DatasetConfig::load(dir / "config.yaml");
  pairs_ = parse_pairs(csv::Table::read_file((dir / "pairs.csv").string()));
  for (std::size_t i = 0; i < pairs_.size(); ++i)
    if (!by_id_.emplace(pairs_[i].pair_id, i).second)
      throw Error(ErrorKind::schema_mismatch, fmt::format("duplicate pair_id '{}'", pairs_[i].pair_id));
}

const PairRecord& DatasetReader::record(std::size_t index) const {
  if (index >= pairs_.size())
    throw Error(ErrorKind::invalid_argument,
                fmt::format("pair index {} out of range ({} pairs)", index, pairs_.size()));
  return pairs_[index];
}

std::optional<std::size_t> DatasetReader::find(const std::string& pair_id) const {
  const auto it = by_id_.find(pair_id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

FuncImg DatasetReader::image(std::size_t index) const {
  return checked_image(dir_, record(index), config_);
}

Sample DatasetReader::sample(std::size_t index) const {
  const PairRecord& r = record(index);
  return {checked_image(dir_, r, config_), r.ots, r.constants, r.skeleton_id};
}

Sample DatasetReader::sample(const std::string& pair_id) const {
  const auto i = find(pair_id);
  if (!i) throw Error(ErrorKind::invalid_argument, fmt::format("unknown pair_id '{}'", pair_id));
  return sample(*i);
}

// ------------------------------------------------------------ verify

std::string_view to_string(FindingKind kind) {
  switch (kind) {
    case FindingKind::schema: return "schema";
    case FindingKind::missing_file: return "missing_file";
    case FindingKind::crc_mismatch: return "crc_mismatch";
    case FindingKind::undecodable: return "undecodable";
    case FindingKind::count_mismatch: return "count_mismatch";
    case FindingKind::unknown_skeleton: return "unknown_skeleton";
    case FindingKind::split_leak: return "split_leak";
    case FindingKind::duplicate_id: return "duplicate_id";
  }
  return "?";
}

std::size_t VerifyReport::count(FindingKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      findings.begin(), findings.end(), [&](const Finding& f) { return f.kind == kind; }));
}

VerifyReport verify_dataset(const fs::path& dir) {
  VerifyReport rep;
  auto add = [&](FindingKind k, std::string d) { rep.findings.push_back({k, std::move(d)}); };
  auto table = [&](const char* name) -> std::optional<csv::Table> {
    if (!fs::exists(dir / name)) {
      add(FindingKind::missing_file, name);
      return std::nullopt;
    }
    try {
      return csv::Table::read_file((dir / name).string());
    } catch (const Error& e) {
      add(FindingKind::schema, fmt::format("{}: {}", name, e.what()));
      return std::nullopt;
    }
  };

  DatasetConfig cfg;
  try {
    cfg = DatasetConfig::load(dir / "config.yaml");
  } catch (const Error& e) {
    add(e.kind() == ErrorKind::io ? FindingKind::missing_file : FindingKind::schema,
        fmt::format("config.yaml: {}", e.what()));
    return rep;
  }
  const auto per_shape = static_cast<std::size_t>(cfg.assignments_per_skeleton);
  const std::size_t expected_skeletons = static_cast<std::size_t>(cfg.n_skeletons) * per_shape;
  const std::size_t requested =
      expected_skeletons * static_cast<std::size_t>(cfg.const_samples_per_ots);
  const Vocab vocab = default_vocab().with_overrides(cfg.vocab_overrides);

  std::set<std::int64_t> skeleton_ids;
  if (auto sk = table("skeletons.csv")) {
    try {
      sk->require({"skeleton_id", "node_count", "ots_template", "formula_skeleton"});
      for (std::size_t i = 0; i < sk->rows().size(); ++i) {
        const auto id = parse_int<std::int64_t>(sk->at(i, "skeleton_id"), "skeleton_id");
        if (!skeleton_ids.insert(id).second)
          add(FindingKind::duplicate_id, fmt::format("skeleton_id {} repeated", id));
        if (!is_reconstructable(parse_ots(sk->at(i, "ots_template")), vocab))
          add(FindingKind::undecodable, fmt::format("skeleton {} template", id));
      }
      if (sk->rows().size() != expected_skeletons)
        add(FindingKind::count_mismatch, fmt::format("skeletons.csv has {} rows, expected {}",
                                                     sk->rows().size(), expected_skeletons));
    } catch (const Error& e) {
      add(FindingKind::schema, fmt::format("skeletons.csv: {}", e.what()));
    }
  }

  std::size_t rejected = 0;
  if (auto rj = table("rejections.csv")) rejected = rj->rows().size();

  std::vector<PairRecord> pairs;
  bool pairs_ok = false;
  if (auto pt = table("pairs.csv")) {
    try {
      pairs = parse_pairs(*pt);
      pairs_ok = true;
    } catch (const Error& e) {
      add(FindingKind::schema, fmt::format("pairs.csv: {}", e.what()));
    }
  }
  if (pairs_ok) {
    const std::size_t block =
        fimg_block_size(static_cast<int>(cfg.render.scales.size()), cfg.render.resolution);
    std::set<std::string> ids;
    std::size_t decodable = 0;
    for (const auto& r : pairs) {
      if (!ids.insert(r.pair_id).second)
        add(FindingKind::duplicate_id, fmt::format("pair_id {} repeated", r.pair_id));
      if (!skeleton_ids.count(r.skeleton_id))
        add(FindingKind::unknown_skeleton,
            fmt::format("pair {} references skeleton {}", r.pair_id, r.skeleton_id));
      if (try_decode_bfs(r.ots, std::span<const double>(r.constants), vocab).ok())
        ++decodable;
      else
        add(FindingKind::undecodable, fmt::format("pair {}", r.pair_id));
      try {
        const auto bytes = read_block(dir, r, block);
        if (crc32(bytes) != r.checksum)
          add(FindingKind::crc_mismatch, fmt::format("pair {} in {}", r.pair_id, r.shard_file));
        else
          (void)decode_fimg(bytes);
      } catch (const Error& e) {
        add(e.kind() == ErrorKind::io ? FindingKind::missing_file : FindingKind::crc_mismatch,
            fmt::format("pair {}: {}", r.pair_id, e.what()));
      }
    }
    rep.pairs_checked = pairs.size();
    rep.acc_r = pairs.empty() ? 0.0
                              : static_cast<double>(decodable) / static_cast<double>(pairs.size());
    if (pairs.size() + rejected != requested)
      add(FindingKind::count_mismatch,
          fmt::format("{} pairs + {} rejections != {} requested", pairs.size(), rejected,
                      requested));
  }

  if (fs::exists(dir / "manifest.json")) {
    try {
      std::ifstream in(dir / "manifest.json");
      const auto man = nlohmann::json::parse(in);
      if (pairs_ok && man.at("pairs").get<std::size_t>() != pairs.size())
        add(FindingKind::count_mismatch,
            fmt::format("manifest lists {} pairs, pairs.csv has {}",
                        man.at("pairs").get<std::size_t>(), pairs.size()));
      if (man.at("rejections").get<std::size_t>() != rejected)
        add(FindingKind::count_mismatch, "manifest rejection count differs from rejections.csv");
    } catch (const nlohmann::json::exception& e) {
      add(FindingKind::schema, fmt::format("manifest.json: {}", e.what()));
    }
  } else {
    add(FindingKind::missing_file, "manifest.json");
  }

  if (auto sp = table("split.csv")) {
    try {
      sp->require({"skeleton_id", "split"});
      std::map<std::int64_t, std::set<std::string>> seen;
      for (std::size_t i = 0; i < sp->rows().size(); ++i) {
        const std::string& s = sp->at(i, "split");
        if (s != "train" && s != "val")
          add(FindingKind::schema, fmt::format("split.csv row {}: unknown split '{}'", i + 2, s));
        seen[parse_int<std::int64_t>(sp->at(i, "skeleton_id"), "skeleton_id")].insert(s);
      }
      for (const auto& [id, splits] : seen)
        if (splits.size() > 1) add(FindingKind::split_leak, fmt::format("skeleton {}", id));
    } catch (const Error& e) {
      add(FindingKind::schema, fmt::format("split.csv: {}", e.what()));
    }
  }
  return rep;
}

}  // namespace otsforge
