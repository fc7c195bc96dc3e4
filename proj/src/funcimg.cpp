#include "otsforge/funcimg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include <zlib.h>

namespace otsforge {

void RenderConfig::validate() const {
  if (scales.empty()) throw Error(ErrorKind::invalid_argument, "render: no scales");
  if (resolution < 2)
    throw Error(ErrorKind::invalid_argument, "render: resolution must be >= 2");
  if (n_vars < 1 || n_vars > 2)
    throw Error(ErrorKind::invalid_argument, "render: n_vars must be 1 or 2");
  if (noise_sigma < 0)
    throw Error(ErrorKind::invalid_argument, "render: noise_sigma must be >= 0");
  if (!(min_finite_fraction > 0 && min_finite_fraction <= 1))
    throw Error(ErrorKind::invalid_argument,
                "render: min_finite_fraction must lie in (0, 1]");
  for (const auto& s : scales)
    if (!(s.lo < s.hi))
      throw Error(ErrorKind::invalid_argument, "render: empty scale interval");
}

namespace {

std::vector<double> linspace(const Scale& scale, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n - 1);
    out[static_cast<std::size_t>(k)] = scale.lo * (1.0 - t) + scale.hi * t;
  }
  return out;
}

}  // namespace

Points meshgrid(const Scale& scale, int resolution, int n_vars) {
  const auto axis = linspace(scale, resolution);
  std::vector<double> data;
  if (n_vars == 1) {
    data = axis;
  } else {
    data.reserve(axis.size() * axis.size() * 2);
    for (double x0 : axis)
      for (double x1 : axis) {
        data.push_back(x0);
        data.push_back(x1);
      }
  }
  return Points(static_cast<std::size_t>(n_vars), std::move(data));
}

Points channel_points(const Scale& scale, int resolution, int n_vars) {
  return meshgrid(scale, resolution, n_vars);
}

FuncImg render(const OpTree& tree, const RenderConfig& cfg) {
  return render(tree, cfg, nullptr);
}

FuncImg render(const OpTree& tree, const RenderConfig& cfg,
               std::vector<ChannelStats>* stats_out) {
  cfg.validate();
  if (tree.max_var_index() >= cfg.n_vars)
    throw Error(ErrorKind::invalid_argument,
                fmt::format("tree uses x{} but only {} variable(s) are rendered",
                            tree.max_var_index(), cfg.n_vars));
  FuncImg img;
  img.n_scales = static_cast<int>(cfg.scales.size());
  img.resolution = cfg.resolution;
  img.n_vars = cfg.n_vars;
  img.scales = cfg.scales;
  const std::size_t plane = img.channel_size();
  img.data.assign(plane * cfg.scales.size(), 0.0f);
  img.mask.assign(plane * cfg.scales.size(), 0);

  std::vector<ChannelStats> stats(cfg.scales.size());
  bool any_domain = false, any_usable = false;
  EvalTape tape;
  for (std::size_t s = 0; s < cfg.scales.size(); ++s) {
    tape.forward(tree, channel_points(cfg.scales[s], cfg.resolution, cfg.n_vars));
    auto v = tape.output();
    ChannelStats& st = stats[s];
    std::size_t n_finite = 0;
    double sum = 0.0;
    st.min = std::numeric_limits<double>::infinity();
    st.max = -std::numeric_limits<double>::infinity();
    for (double x : v)
      if (std::isfinite(x)) {
        ++n_finite;
        sum += x;
        st.min = std::min(st.min, x);
        st.max = std::max(st.max, x);
      }
    st.finite_fraction = static_cast<double>(n_finite) / static_cast<double>(v.size());
    if (n_finite > 0) {
      const double mean = sum / static_cast<double>(n_finite);
      double acc = 0.0;
      for (double x : v)
        if (std::isfinite(x)) acc += (x - mean) * (x - mean);
      st.variance = acc / static_cast<double>(n_finite);
    } else {
      st.min = st.max = 0.0;
    }
    const bool domain_ok = st.finite_fraction >= cfg.min_finite_fraction;
    any_domain = any_domain || domain_ok;
    // min - max can overflow for huge finite values; treat as usable.
    const bool varies = !(st.variance < cfg.min_variance);
    any_usable = any_usable || (domain_ok && varies);

    const double range = st.max - st.min;
    float* out = img.data.data() + s * plane;
    std::uint8_t* mask = img.mask.data() + s * plane;
    auto normalized = [&](double x) -> float {
      if (!(range > 0.0)) return 0.0f;
      const double p = std::isfinite(range)
                           ? (x - st.min) / range
                           : (0.5 * x - 0.5 * st.min) / (0.5 * st.max - 0.5 * st.min);
      return static_cast<float>(std::clamp(p, 0.0, 1.0));
    };
    if (cfg.n_vars == 1) {
      for (int c = 0; c < cfg.resolution; ++c) {
        const double x = v[static_cast<std::size_t>(c)];
        const bool ok = std::isfinite(x);
        const float val = ok ? normalized(x) : 0.0f;
        for (int r = 0; r < cfg.resolution; ++r) {
          const std::size_t k = static_cast<std::size_t>(r * cfg.resolution + c);
          out[k] = val;
          mask[k] = ok ? 1 : 0;
        }
      }
    } else {
      for (std::size_t k = 0; k < plane; ++k) {
        const bool ok = std::isfinite(v[k]);
        out[k] = ok ? normalized(v[k]) : 0.0f;
        mask[k] = ok ? 1 : 0;
      }
    }
  }
  if (stats_out) *stats_out = stats;
  if (!any_domain) throw RationalityError(RationalityReason::insufficient_domain);
  if (!any_usable) throw RationalityError(RationalityReason::constant);
  if (cfg.noise_sigma > 0.0) {
    Rng rng(cfg.noise_seed, 0);
    img = add_noise(img, cfg.noise_sigma, rng);
  }
  return img;
}

FuncImg add_noise(const FuncImg& img, double sigma, Rng& rng) {
  if (sigma < 0) throw Error(ErrorKind::invalid_argument, "noise sigma must be >= 0");
  FuncImg out = img;
  if (sigma == 0.0) return out;
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    if (!out.mask[k]) continue;
    const double v = static_cast<double>(out.data[k]) + sigma * rng.normal();
    out.data[k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  out.noisy = true;
  return out;
}

// ------------------------------------------------------------------ FIMG I/O

namespace {

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}
std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[at + k]) << (8 * k);
  return v;
}
std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

}  // namespace

std::size_t fimg_block_size(int n_scales, int resolution) {
  const std::size_t n = static_cast<std::size_t>(n_scales) *
                        static_cast<std::size_t>(resolution) *
                        static_cast<std::size_t>(resolution);
  return kFimgHeaderSize + 4 * n + (n + 7) / 8;
}

std::vector<std::uint8_t> encode_fimg(const FuncImg& img) {
  std::vector<std::uint8_t> b;
  b.reserve(fimg_block_size(img.n_scales, img.resolution));
  for (char c : {'F', 'I', 'M', 'G'}) b.push_back(static_cast<std::uint8_t>(c));
  put_u16(b, kFimgVersion);
  put_u16(b, img.noisy ? kFimgFlagNoisy : 0);
  put_u32(b, static_cast<std::uint32_t>(img.n_scales));
  put_u32(b, static_cast<std::uint32_t>(img.resolution));
  put_u32(b, static_cast<std::uint32_t>(img.n_vars));
  for (float f : img.data) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(b, bits);
  }
  std::uint8_t acc = 0;
  for (std::size_t k = 0; k < img.mask.size(); ++k) {
    if (img.mask[k]) acc |= static_cast<std::uint8_t>(1u << (k % 8));
    if (k % 8 == 7) {
      b.push_back(acc);
      acc = 0;
    }
  }
  if (img.mask.size() % 8 != 0) b.push_back(acc);
  return b;
}

FuncImg decode_fimg(std::span<const std::uint8_t> b) {
  auto corrupt = [](const std::string& why) {
    return Error(ErrorKind::corrupt_shard, "FIMG block: " + why);
  };
  if (b.size() < kFimgHeaderSize) throw corrupt("short header");
  if (!(b[0] == 'F' && b[1] == 'I' && b[2] == 'M' && b[3] == 'G'))
    throw corrupt("bad magic");
  if (get_u16(b, 4) != kFimgVersion)
    throw Error(ErrorKind::schema_mismatch,
                fmt::format("FIMG version {} unsupported", get_u16(b, 4)));
  FuncImg img;
  img.noisy = (get_u16(b, 6) & kFimgFlagNoisy) != 0;
  img.n_scales = static_cast<int>(get_u32(b, 8));
  img.resolution = static_cast<int>(get_u32(b, 12));
  img.n_vars = static_cast<int>(get_u32(b, 16));
  if (img.n_scales <= 0 || img.resolution <= 0 || img.n_scales > 64 ||
      img.resolution > 65536 || img.n_vars < 1 || img.n_vars > 2)
    throw corrupt("implausible dimensions");
  if (b.size() != fimg_block_size(img.n_scales, img.resolution))
    throw corrupt(fmt::format("size {} does not match header", b.size()));
  const std::size_t n = static_cast<std::size_t>(img.n_scales) * img.channel_size();
  img.data.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint32_t bits = get_u32(b, kFimgHeaderSize + 4 * k);
    std::memcpy(&img.data[k], &bits, sizeof bits);
  }
  img.mask.resize(n);
  const std::size_t mask_at = kFimgHeaderSize + 4 * n;
  for (std::size_t k = 0; k < n; ++k)
    img.mask[k] = (b[mask_at + k / 8] >> (k % 8)) & 1u;
  return img;
}

void write_fimg_file(const std::string& path, const FuncImg& img) {
  const auto bytes = encode_fimg(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "short write to " + path);
}

FuncImg read_fimg_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_fimg(bytes);
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace otsforge
