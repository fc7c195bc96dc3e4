#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "otsforge/funcimg.hpp"
#include "otsforge/optree.hpp"
#include "otsforge/treegen.hpp"
#include "otsforge/vocab.hpp"

namespace otsforge {

inline constexpr int kDatasetVersion = 1;

struct SplitFractions {
  double train = 0.8;
  double val = 0.2;
};

struct DatasetConfig {
  std::vector<ConstraintOverride> vocab_overrides;
  GenConfig gen;
  RenderConfig render;
  int n_skeletons = 3;
  int assignments_per_skeleton = 4;
  int const_samples_per_ots = 5;
  int shard_size = 1024;
  SplitFractions split;
  std::uint64_t seed = 0;
  /// Not written to config.yaml.
  std::filesystem::path output_dir;

  void validate() const;

  /// Top-level keys: version, seed, vocab, gen, render, counts, split and an
  /// optional output_dir. Unknown keys and versions are SchemaMismatch.
  static DatasetConfig from_yaml(const std::string& text);
  static DatasetConfig load(const std::filesystem::path& path);
  [[nodiscard]] std::string to_yaml() const;
};

struct DatasetManifest {
  std::filesystem::path dir;
  std::size_t shapes = 0;
  std::size_t skeletons = 0;
  /// Pairs before rationality rejections.
  std::size_t requested_pairs = 0;
  std::size_t pairs = 0;
  std::size_t rejections = 0;
  std::size_t shards = 0;
  std::size_t train_skeletons = 0;
  std::size_t val_skeletons = 0;
};

/// Writes config.yaml, vocab.json, skeletons.csv, pairs.csv, split.csv,
/// rejections.csv, manifest.json and shard-NNNNN.fimg into cfg.output_dir.
/// Output bytes depend only on the config.
DatasetManifest build_dataset(const DatasetConfig& cfg);

struct PairRecord {
  std::string pair_id;
  std::int64_t skeleton_id = 0;
  Ots ots;
  ConstArray constants;
  std::string shard_file;
  std::uint64_t shard_offset = 0;
  std::uint32_t checksum = 0;
};

struct Sample {
  FuncImg image;
  Ots ots;
  ConstArray constants;
  std::int64_t skeleton_id = 0;
};

/// Random-access reader over a built dataset. Safe for concurrent reads.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& dir);

  [[nodiscard]] const DatasetConfig& config() const { return config_; }
  [[nodiscard]] std::size_t size() const { return pairs_.size(); }
  [[nodiscard]] const std::vector<PairRecord>& pairs() const { return pairs_; }
  [[nodiscard]] const PairRecord& record(std::size_t index) const;
  [[nodiscard]] std::optional<std::size_t> find(const std::string& pair_id) const;

  /// Throws CorruptShard on a CRC or header mismatch.
  [[nodiscard]] FuncImg image(std::size_t index) const;
  [[nodiscard]] Sample sample(std::size_t index) const;
  [[nodiscard]] Sample sample(const std::string& pair_id) const;

 private:
  std::filesystem::path dir_;
  DatasetConfig config_;
  std::vector<PairRecord> pairs_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
};

enum class FindingKind {
  schema,
  missing_file,
  crc_mismatch,
  undecodable,
  count_mismatch,
  unknown_skeleton,
  split_leak,
  duplicate_id,
};

std::string_view to_string(FindingKind kind);

struct Finding {
  FindingKind kind;
  std::string detail;
};

struct VerifyReport {
  std::size_t pairs_checked = 0;
  /// Fraction of stored OTS that decode with their constants.
  double acc_r = 0.0;
  std::vector<Finding> findings;

  [[nodiscard]] bool ok() const { return findings.empty(); }
  [[nodiscard]] std::size_t count(FindingKind kind) const;
};

/// Never throws for dataset problems; they become findings.
VerifyReport verify_dataset(const std::filesystem::path& dir);

}  // namespace otsforge
