#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "otsforge/funcimg.hpp"
#include "otsforge/optree.hpp"
#include "otsforge/rng.hpp"
#include "otsforge/vocab.hpp"

namespace otsforge {

struct GenConfig {
  int node_min = 5;
  int node_max = 15;
  int n_vars = 1;
  double const_lo = -2.0;
  double const_hi = 2.0;
  std::vector<ConstraintOverride> overrides;
  std::uint64_t seed = 0;
  int max_rejections = 100;
  /// Growth weights for arity (leaf, unary, binary).
  std::array<double, 3> arity_weights{0.2, 0.4, 0.4};
  /// Minimum |a| of the multiplicative slot of L.
  double min_linear_scale = 0.05;

  void validate() const;
};

struct SkeletonNode {
  int arity = 0;
  std::array<int, 2> children{-1, -1};
  int parent = -1;
};

/// Arity-tagged tree shape in BFS order (node 0 is the root).
struct Skeleton {
  std::vector<SkeletonNode> nodes;

  [[nodiscard]] int node_count() const { return static_cast<int>(nodes.size()); }
  bool operator==(const Skeleton& other) const;
};

/// Checks the vocab's generation constraints on a finished tree: max_count,
/// forbidden parent/child pairs, unary run lengths, and the constant-exponent
/// rule for pow.
bool satisfies_constraints(const OpTree& tree, const Vocab& vocab);

/// Constrained random tree generator. The effective vocab is the base vocab
/// with the config's constraint overrides applied.
class TreeGenerator {
 public:
  TreeGenerator(const Vocab& base, GenConfig cfg);

  [[nodiscard]] const Vocab& vocab() const { return vocab_; }
  [[nodiscard]] const GenConfig& config() const { return cfg_; }

  Skeleton sample_skeleton(Rng& rng) const;
  /// Symbols only; constants are zero (L gets its (1, 0) identity).
  OpTree assign_symbols(const Skeleton& skeleton, Rng& rng) const;
  ConstArray sample_constants(const OpTree& tree, Rng& rng) const;
  /// Skeleton, symbols, constants; retried until the formula is not constant
  /// and renders under `render_cfg`.
  OpTree generate_valid_tree(Rng& rng, const RenderConfig& render_cfg) const;

 private:
  std::optional<Skeleton> try_grow(int target, Rng& rng) const;
  std::optional<OpTree> try_assign(const Skeleton& skeleton, Rng& rng) const;

  Vocab vocab_;
  GenConfig cfg_;
  int global_max_consecutive_;
};

}  // namespace otsforge
