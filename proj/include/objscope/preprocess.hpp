#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "objscope/binary_io.hpp"
#include "objscope/error.hpp"

namespace objscope {

inline constexpr std::size_t kDefaultGridSide = 8;
inline constexpr std::size_t kDefaultLevels = 4;

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;  // row-major

  [[nodiscard]] double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

// Downsampled brightness grid, row-major side x side.
struct Grid {
  std::size_t side = kDefaultGridSide;
  std::vector<double> values;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  bool operator==(const Grid&) const = default;
};

// ITU-R BT.601 luma weights.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline void to_grayscale(std::span<const std::uint8_t> frame, std::size_t width, std::size_t height, int channels,
                         GrayImage& out) {
  if (channels != 1 && channels != 3) throw FormatError("to_grayscale: channels must be 1 or 3");
  const std::size_t pixels = width * height;
  if (frame.size() != pixels * static_cast<std::size_t>(channels)) {
    throw FormatError("to_grayscale: frame has " + std::to_string(frame.size()) + " bytes, expected " +
                      std::to_string(pixels * static_cast<std::size_t>(channels)));
  }
  out.width = width;
  out.height = height;
  out.values.resize(pixels);
  if (channels == 1) {
    for (std::size_t p = 0; p < pixels; ++p) out.values[p] = frame[p];
    return;
  }
  for (std::size_t p = 0; p < pixels; ++p) {
    const auto* px = &frame[3 * p];
    out.values[p] = kLumaR * px[0] + kLumaG * px[1] + kLumaB * px[2];
  }
}

inline GrayImage to_grayscale(std::span<const std::uint8_t> frame, std::size_t width, std::size_t height,
                              int channels) {
  GrayImage out;
  to_grayscale(frame, width, height, channels, out);
  return out;
}

// Bilinear resize with half-pixel-center sampling and edge clamping:
// destination (dx, dy) samples sx = (dx + 0.5) * W / side - 0.5 (sy likewise).
inline void resize_bilinear(const GrayImage& src, std::size_t side, Grid& out) {
  if (src.width == 0 || src.height == 0 || src.values.size() != src.width * src.height) {
    throw FormatError("resize_bilinear: empty or inconsistent source image");
  }
  if (side == 0) throw FormatError("resize_bilinear: grid side must be positive");
  out.side = side;
  out.values.resize(side * side);
  const double w = static_cast<double>(src.width);
  const double h = static_cast<double>(src.height);
  for (std::size_t dy = 0; dy < side; ++dy) {
    double sy = (static_cast<double>(dy) + 0.5) * h / static_cast<double>(side) - 0.5;
    sy = std::clamp(sy, 0.0, h - 1.0);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t dx = 0; dx < side; ++dx) {
      double sx = (static_cast<double>(dx) + 0.5) * w / static_cast<double>(side) - 0.5;
      sx = std::clamp(sx, 0.0, w - 1.0);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = (1.0 - fx) * src.at(x0, y0) + fx * src.at(x1, y0);
      const double bottom = (1.0 - fx) * src.at(x0, y1) + fx * src.at(x1, y1);
      out.values[dy * side + dx] = (1.0 - fy) * top + fy * bottom;
    }
  }
}

inline Grid resize_bilinear(const GrayImage& src, std::size_t side = kDefaultGridSide) {
  Grid g;
  resize_bilinear(src, side, g);
  return g;
}

inline Grid resize_bilinear_8x8(const GrayImage& src) { return resize_bilinear(src, 8); }

// Raw frame bytes -> Grid, reusing scratch buffers across frames.
class FrameReducer {
 public:
  FrameReducer(std::size_t width, std::size_t height, int channels, std::size_t side = kDefaultGridSide)
      : width_(width), height_(height), channels_(channels), side_(side) {}

  const Grid& operator()(std::span<const std::uint8_t> frame) {
    to_grayscale(frame, width_, height_, channels_, gray_);
    resize_bilinear(gray_, side_, grid_);
    return grid_;
  }

  [[nodiscard]] std::size_t side() const { return side_; }

 private:
  std::size_t width_;
  std::size_t height_;
  int channels_;
  std::size_t side_;
  GrayImage gray_;
  Grid grid_;
};

// ---------------------------------------------------------------------------
// Pass 1: per-pixel sets of distinct brightness values.

class PixelValuePool {
 public:
  explicit PixelValuePool(std::size_t side = kDefaultGridSide) : side_(side), sets_(side * side) {}

  [[nodiscard]] std::size_t side() const { return side_; }
  [[nodiscard]] std::size_t pixel_count() const { return sets_.size(); }
  [[nodiscard]] const std::vector<double>& values(std::size_t pixel) const { return sets_[pixel]; }

  void add(const Grid& grid) {
    if (grid.side != side_ || grid.values.size() != sets_.size()) {
      throw FormatError("PixelValuePool: grid side " + std::to_string(grid.side) + " does not match pool side " +
                        std::to_string(side_));
    }
    for (std::size_t p = 0; p < sets_.size(); ++p) {
      auto& s = sets_[p];
      const double v = grid.values[p];
      auto it = std::lower_bound(s.begin(), s.end(), v);
      if (it == s.end() || *it != v) s.insert(it, v);
    }
  }

  void merge(const PixelValuePool& other) {
    if (other.side_ != side_) throw FormatError("PixelValuePool: cannot merge pools of different sides");
    for (std::size_t p = 0; p < sets_.size(); ++p) {
      std::vector<double> merged;
      merged.reserve(sets_[p].size() + other.sets_[p].size());
      std::set_union(sets_[p].begin(), sets_[p].end(), other.sets_[p].begin(), other.sets_[p].end(),
                     std::back_inserter(merged));
      sets_[p] = std::move(merged);
    }
  }

  bool operator==(const PixelValuePool&) const = default;

  void write(std::ostream& out) const {
    le::put_bytes(out, "AGPL", 4);
    le::put<std::uint16_t>(out, 1);
    le::put<std::uint16_t>(out, static_cast<std::uint16_t>(side_));
    for (const auto& s : sets_) {
      le::put<std::uint64_t>(out, s.size());
      for (double v : s) le::put_f64(out, v);
    }
    le::check_stream(out, "pixel pool");
  }

  static PixelValuePool read(std::istream& in) {
    le::expect_magic(in, "AGPL", "pixel pool");
    le::expect_version(in, 1, "pixel pool");
    PixelValuePool pool(le::get<std::uint16_t>(in, "pool side"));
    for (auto& s : pool.sets_) {
      const auto n = le::get<std::uint64_t>(in, "pool set size");
      s.resize(n);
      for (auto& v : s) v = le::get_f64(in, "pool value");
      if (!std::is_sorted(s.begin(), s.end()) || std::adjacent_find(s.begin(), s.end()) != s.end()) {
        throw IntegrityError("pixel pool: value set not strictly ascending");
      }
    }
    return pool;
  }

 private:
  std::size_t side_;
  std::vector<std::vector<double>> sets_;
};

template <typename Grids>
PixelValuePool collect_pixel_values(const Grids& grids, PixelValuePool pool) {
  for (const auto& g : grids) pool.add(g);
  return pool;
}

// ---------------------------------------------------------------------------
// Thresholds

enum class DiscretizationScope : std::uint8_t { shared = 0, per_agent = 1 };

inline std::string scope_name(DiscretizationScope s) {
  return s == DiscretizationScope::shared ? "shared" : "per-agent";
}

inline DiscretizationScope parse_scope(const std::string& s) {
  if (s == "shared") return DiscretizationScope::shared;
  if (s == "per-agent" || s == "per_agent") return DiscretizationScope::per_agent;
  throw ConfigError("unknown discretization scope '" + s + "' (expected shared or per-agent)");
}

struct ThresholdTable {
  std::size_t side = kDefaultGridSide;
  std::size_t levels = kDefaultLevels;
  DiscretizationScope scope = DiscretizationScope::shared;
  // levels-1 ascending cut points per pixel, pixel-major.
  std::vector<double> cuts;

  [[nodiscard]] std::size_t cuts_per_pixel() const { return levels - 1; }
  [[nodiscard]] std::span<const double> pixel(std::size_t p) const {
    return {cuts.data() + p * cuts_per_pixel(), cuts_per_pixel()};
  }
  bool operator==(const ThresholdTable&) const = default;

  void write(std::ostream& out) const {
    le::put_bytes(out, "AGTH", 4);
    le::put<std::uint16_t>(out, 1);
    le::put<std::uint16_t>(out, static_cast<std::uint16_t>(side));
    le::put<std::uint16_t>(out, static_cast<std::uint16_t>(levels));
    le::put<std::uint8_t>(out, static_cast<std::uint8_t>(scope));
    for (double c : cuts) le::put_f64(out, c);
    le::check_stream(out, "threshold table");
  }

  static ThresholdTable read(std::istream& in) {
    le::expect_magic(in, "AGTH", "threshold table");
    le::expect_version(in, 1, "threshold table");
    ThresholdTable t;
    t.side = le::get<std::uint16_t>(in, "threshold side");
    t.levels = le::get<std::uint16_t>(in, "threshold levels");
    const auto scope = le::get<std::uint8_t>(in, "threshold scope");
    if (scope > 1 || t.levels < 2) throw DecodeError("threshold table: invalid scope or level count");
    t.scope = static_cast<DiscretizationScope>(scope);
    t.cuts.resize(t.side * t.side * (t.levels - 1));
    for (auto& c : t.cuts) c = le::get_f64(in, "threshold value");
    return t;
  }
};

// Nearest-rank percentile over a sorted unique set: percentile p picks the
// element at 1-based rank ceil(p * m / 100). With `levels` buckets the cut
// points sit at percentiles 100 q / levels, q = 1..levels-1.
inline ThresholdTable compute_thresholds(const PixelValuePool& pool, std::size_t levels = kDefaultLevels,
                                         DiscretizationScope scope = DiscretizationScope::shared) {
  if (levels < 2) throw DomainError("compute_thresholds: need at least 2 levels");
  ThresholdTable t;
  t.side = pool.side();
  t.levels = levels;
  t.scope = scope;
  t.cuts.reserve(pool.pixel_count() * (levels - 1));
  for (std::size_t p = 0; p < pool.pixel_count(); ++p) {
    const auto& s = pool.values(p);
    if (s.empty()) {
      throw PreconditionError("compute_thresholds: pixel " + std::to_string(p) + " (row " +
                              std::to_string(p / pool.side()) + ", col " + std::to_string(p % pool.side()) +
                              ") has no observed values");
    }
    const std::size_t m = s.size();
    for (std::size_t q = 1; q < levels; ++q) {
      // ceil(q * m / levels), integer arithmetic
      const std::size_t rank = (q * m + levels - 1) / levels;
      t.cuts.push_back(s[std::max<std::size_t>(rank, 1) - 1]);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Discrete frames and digests

struct Digest {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  auto operator<=>(const Digest&) const = default;
  bool operator==(const Digest&) const = default;
};

struct DigestHash {
  std::size_t operator()(const Digest& d) const noexcept {
    std::uint64_t h = d.lo * 0x9E3779B97F4A7C15ULL;
    h ^= (d.hi + 0x632BE59BD9B4E019ULL) + (h << 6) + (h >> 2);
    h ^= h >> 31;
    return static_cast<std::size_t>(h * 0xBF58476D1CE4E5B9ULL);
  }
};

inline std::size_t bits_per_digit(std::size_t levels) {
  return static_cast<std::size_t>(std::bit_width(levels - 1));
}

inline void check_digest_capacity(std::size_t side, std::size_t levels) {
  if (side * side * bits_per_digit(levels) > 128) {
    throw DomainError("grid " + std::to_string(side) + " with " + std::to_string(levels) +
                      " levels does not fit a 128-bit digest");
  }
}

struct DiscreteFrame {
  std::vector<std::uint8_t> digits;
  Digest digest;
};

// Packs digit p at bit offset p * bits_per_digit (low word first).
inline Digest pack_digits(std::span<const std::uint8_t> digits, std::size_t levels) {
  const std::size_t bits = bits_per_digit(levels);
  Digest d;
  for (std::size_t p = 0; p < digits.size(); ++p) {
    const std::size_t off = p * bits;
    const auto v = static_cast<std::uint64_t>(digits[p]);
    if (off < 64) {
      d.lo |= v << off;
      if (off + bits > 64) d.hi |= v >> (64 - off);
    } else {
      d.hi |= v << (off - 64);
    }
  }
  return d;
}

// Bucket of one value: value <= cut[0] -> 0, <= cut[1] -> 1, ..., else levels-1.
inline std::uint8_t bucket(double value, std::span<const double> cuts) {
  std::uint8_t digit = 0;
  while (digit < cuts.size() && value > cuts[digit]) ++digit;
  return digit;
}

inline DiscreteFrame discretize(const Grid& grid, const ThresholdTable& table) {
  if (grid.side != table.side) throw FormatError("discretize: grid side does not match threshold table");
  check_digest_capacity(table.side, table.levels);
  DiscreteFrame f;
  f.digits.resize(grid.values.size());
  for (std::size_t p = 0; p < grid.values.size(); ++p) f.digits[p] = bucket(grid.values[p], table.pixel(p));
  f.digest = pack_digits(f.digits, table.levels);
  return f;
}

// Same as discretize(...).digest without materializing digits.
inline Digest digest_of(const Grid& grid, const ThresholdTable& table) {
  if (grid.side != table.side) throw FormatError("digest_of: grid side does not match threshold table");
  check_digest_capacity(table.side, table.levels);
  const std::size_t bits = bits_per_digit(table.levels);
  Digest d;
  for (std::size_t p = 0; p < grid.values.size(); ++p) {
    const auto v = static_cast<std::uint64_t>(bucket(grid.values[p], table.pixel(p)));
    const std::size_t off = p * bits;
    if (off < 64) {
      d.lo |= v << off;
      if (off + bits > 64) d.hi |= v >> (64 - off);
    } else {
      d.hi |= v << (off - 64);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Codebook: sorted distinct digests, index = rank.

class Codebook {
 public:
  Codebook() = default;

  // Takes any collection of digests; sorts and dedupes.
  explicit Codebook(std::vector<Digest> digests) : digests_(std::move(digests)) {
    std::sort(digests_.begin(), digests_.end());
    digests_.erase(std::unique(digests_.begin(), digests_.end()), digests_.end());
  }

  [[nodiscard]] std::size_t size() const { return digests_.size(); }
  [[nodiscard]] const std::vector<Digest>& digests() const { return digests_; }
  [[nodiscard]] const Digest& digest(std::size_t index) const { return digests_.at(index); }

  [[nodiscard]] std::optional<std::uint32_t> find(const Digest& d) const {
    auto it = std::lower_bound(digests_.begin(), digests_.end(), d);
    if (it == digests_.end() || *it != d) return std::nullopt;
    return static_cast<std::uint32_t>(it - digests_.begin());
  }

  [[nodiscard]] std::uint32_t index_of(const Digest& d) const {
    auto i = find(d);
    if (!i) throw IntegrityError("codebook: digest not present");
    return *i;
  }

  bool operator==(const Codebook&) const = default;

  void write(std::ostream& out) const {
    le::put_bytes(out, "AGCB", 4);
    le::put<std::uint16_t>(out, 1);
    le::put<std::uint64_t>(out, digests_.size());
    for (const auto& d : digests_) {
      le::put<std::uint64_t>(out, d.lo);
      le::put<std::uint64_t>(out, d.hi);
    }
    le::check_stream(out, "codebook");
  }

  static Codebook read(std::istream& in) {
    le::expect_magic(in, "AGCB", "codebook");
    le::expect_version(in, 1, "codebook");
    const auto n = le::get<std::uint64_t>(in, "codebook size");
    Codebook cb;
    cb.digests_.resize(n);
    for (auto& d : cb.digests_) {
      d.lo = le::get<std::uint64_t>(in, "codebook digest");
      d.hi = le::get<std::uint64_t>(in, "codebook digest");
    }
    if (std::adjacent_find(cb.digests_.begin(), cb.digests_.end(),
                           [](const Digest& a, const Digest& b) { return !(a < b); }) != cb.digests_.end()) {
      throw IntegrityError("codebook: digests not strictly ascending");
    }
    return cb;
  }

 private:
  std::vector<Digest> digests_;
};

// Mergeable set of digests feeding a Codebook.
class CodebookBuilder {
 public:
  void add(const Digest& d) { seen_.insert(d); }
  void merge(const CodebookBuilder& other) { seen_.insert(other.seen_.begin(), other.seen_.end()); }
  [[nodiscard]] Codebook build() const { return Codebook(std::vector<Digest>(seen_.begin(), seen_.end())); }

 private:
  std::unordered_set<Digest, DigestHash> seen_;
};

template <typename Digests>
Codebook build_codebook(const Digests& digests) {
  return Codebook(std::vector<Digest>(std::begin(digests), std::end(digests)));
}

}  // namespace objscope
