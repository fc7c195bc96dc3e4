#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "otsforge/eval.hpp"
#include "otsforge/optree.hpp"
#include "otsforge/rng.hpp"

namespace otsforge {

struct Scale {
  double lo = -1.0;
  double hi = 1.0;
  bool operator==(const Scale&) const = default;
};

struct RenderConfig {
  std::vector<Scale> scales{{-0.1, 0.1}, {-1.0, 1.0}, {-10.0, 10.0}};
  int resolution = 64;
  int n_vars = 1;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  double min_finite_fraction = 0.5;
  double min_variance = 1e-9;

  void validate() const;
};

/// Multi-scale function image, shape (n_scales, resolution, resolution).
/// For one variable the curve is repeated along the row axis.
struct FuncImg {
  int n_scales = 0;
  int resolution = 0;
  int n_vars = 1;
  bool noisy = false;
  std::vector<float> data;
  std::vector<std::uint8_t> mask;  // 1 = originally finite
  std::vector<Scale> scales;       // not part of the binary block

  [[nodiscard]] std::size_t channel_size() const {
    return static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution);
  }
  [[nodiscard]] std::size_t index(int s, int r, int c) const {
    return static_cast<std::size_t>(s) * channel_size() +
           static_cast<std::size_t>(r) * static_cast<std::size_t>(resolution) +
           static_cast<std::size_t>(c);
  }
  [[nodiscard]] float at(int s, int r, int c) const { return data[index(s, r, c)]; }
  [[nodiscard]] bool valid(int s, int r, int c) const { return mask[index(s, r, c)] != 0; }

  bool operator==(const FuncImg& o) const {
    return n_scales == o.n_scales && resolution == o.resolution &&
           n_vars == o.n_vars && data == o.data && mask == o.mask;
  }
};

/// Inclusive, uniformly spaced grid. Two variables: resolution^2 rows with
/// x1 varying fastest.
Points meshgrid(const Scale& scale, int resolution, int n_vars);

/// Evaluation points of one channel: `resolution` rows for one variable
/// (the broadcast axis is not materialised), `resolution^2` for two.
Points channel_points(const Scale& scale, int resolution, int n_vars);

struct ChannelStats {
  double finite_fraction = 0.0;
  double variance = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// Renders, masks non-finite values, min-max normalizes each channel over its
/// finite entries, then optionally adds noise. Throws RationalityError when
/// every channel is (nearly) constant or every channel has too few finite
/// points.
FuncImg render(const OpTree& tree, const RenderConfig& cfg);

/// Same as render, also reporting per-channel statistics of the raw values.
FuncImg render(const OpTree& tree, const RenderConfig& cfg,
               std::vector<ChannelStats>* stats);

/// i.i.d. N(0, sigma^2) on masked-true entries, clamped to [0, 1].
FuncImg add_noise(const FuncImg& img, double sigma, Rng& rng);

// ------------------------------------------------------------------ FIMG I/O

inline constexpr std::uint16_t kFimgVersion = 1;
inline constexpr std::uint16_t kFimgFlagNoisy = 1u << 0;
inline constexpr std::size_t kFimgHeaderSize = 20;

/// Binary block: "FIMG", u16 version, u16 flags, u32 n_scales,
/// u32 resolution, u32 n_vars, float32 data (LE, row-major), then the mask
/// packed LSB-first in row-major order.
std::vector<std::uint8_t> encode_fimg(const FuncImg& img);
FuncImg decode_fimg(std::span<const std::uint8_t> bytes);
std::size_t fimg_block_size(int n_scales, int resolution);

void write_fimg_file(const std::string& path, const FuncImg& img);
FuncImg read_fimg_file(const std::string& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace otsforge
