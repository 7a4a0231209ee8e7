#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinface/eval/verification.hpp"

namespace kinface::eval {

struct Point2 {
  double x = 0, y = 0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline const std::array<std::string, 4>& region_names() {
  static const std::array<std::string, 4> names{"eyes", "nose", "mouth", "chin"};
  return names;
}

/// Eyes and mouth outlines are closed loops; nose and chin are open curves.
inline bool region_is_closed(const std::string& region) { return region == "eyes" || region == "mouth"; }

struct LandmarkSet {
  std::map<std::string, std::vector<Point2>> regions;

  void validate() const {
    for (const auto& [name, pts] : regions) {
      if (pts.size() < 3) throw std::invalid_argument("region '" + name + "' needs at least 3 points");
      for (const auto& p : pts)
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0 || p.y < 0)
          throw std::invalid_argument("region '" + name + "' has a point outside the image");
    }
  }
};

class LandmarkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline LandmarkSet parse_landmarks(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("regions") || !doc["regions"].is_object())
    throw LandmarkError("landmark document needs a 'regions' object");
  LandmarkSet set;
  for (const auto& [name, pts] : doc["regions"].items()) {
    if (!pts.is_array()) throw LandmarkError("region '" + name + "' is not a point list");
    auto& out = set.regions[name];
    for (const auto& p : pts) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        throw LandmarkError("region '" + name + "' has a malformed point");
      out.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  try {
    set.validate();
  } catch (const std::invalid_argument& e) {
    throw LandmarkError(e.what());
  }
  return set;
}

inline LandmarkSet load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LandmarkError("cannot open landmark file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw LandmarkError(path.string() + ": " + e.what());
  }
  try {
    return parse_landmarks(doc);
  } catch (const LandmarkError& e) {
    throw LandmarkError(path.string() + ": " + e.what());
  }
}

/// Row-major binary image, 1 = stroke.
struct Raster {
  std::size_t side = 0;
  std::vector<std::uint8_t> pixels;

  explicit Raster(std::size_t s = 0) : side(s), pixels(s * s, 0) {}
  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * side + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * side + x]; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), 1)); }
  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Integer Bresenham; visits both endpoints.
inline void draw_line(Raster& r, long x0, long y0, long x1, long y1) {
  const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  const long side = static_cast<long>(r.side);
  for (;;) {
    if (x0 >= 0 && y0 >= 0 && x0 < side && y0 < side) r.at(static_cast<std::size_t>(x0), static_cast<std::size_t>(y0)) = 1;
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

/**
 * Maps the region's bounding box onto the central 80% of a canvas (aspect
 * preserved, longer side spans 0.8 * (side - 1) pixels), rounds points to
 * pixels and joins consecutive points with Bresenham strokes.
 */
inline Raster rasterize_region(const std::vector<Point2>& pts, std::size_t side, bool closed) {
  if (pts.size() < 3) throw std::invalid_argument("rasterize_region: need at least 3 points");
  if (side < 8) throw std::invalid_argument("rasterize_region: canvas too small");
  double x0 = pts[0].x, x1 = x0, y0 = pts[0].y, y1 = y0;
  for (const auto& p : pts) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double extent = std::max(x1 - x0, y1 - y0);
  if (!(extent > 0)) throw std::invalid_argument("rasterize_region: degenerate region (all points identical)");
  const double span = 0.8 * static_cast<double>(side - 1);
  const double scale = span / extent;
  const double centre = 0.5 * static_cast<double>(side - 1);
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  std::vector<std::array<long, 2>> px;
  px.reserve(pts.size());
  for (const auto& p : pts)
    px.push_back({std::lround(centre + (p.x - cx) * scale), std::lround(centre + (p.y - cy) * scale)});
  Raster r(side);
  for (std::size_t i = 0; i + 1 < px.size(); ++i) draw_line(r, px[i][0], px[i][1], px[i + 1][0], px[i + 1][1]);
  if (closed) draw_line(r, px.back()[0], px.back()[1], px.front()[0], px.front()[1]);
  return r;
}

using HuMoments = std::array<double, 7>;

/**
 * Hu's seven invariants of the set pixels. With N pixels and coordinate
 * sums X, Y, the scaled offsets N*x - X and N*y - Y are integers, so central
 * moments are accumulated exactly in 128-bit integers before the single
 * conversion to floating point. Translated rasters give identical bits.
 */
inline HuMoments hu_moments(const Raster& r) {
  __int128 n = 0, sx = 0, sy = 0;
  for (std::size_t y = 0; y < r.side; ++y)
    for (std::size_t x = 0; x < r.side; ++x)
      if (r.at(x, y)) {
        ++n;
        sx += static_cast<__int128>(x);
        sy += static_cast<__int128>(y);
      }
  if (n == 0) throw std::invalid_argument("hu_moments: empty raster");
  __int128 s[4][4] = {};  // s[p][q] = sum (N x - X)^p (N y - Y)^q, p + q in 2..3
  for (std::size_t y = 0; y < r.side; ++y)
    for (std::size_t x = 0; x < r.side; ++x) {
      if (!r.at(x, y)) continue;
      const __int128 u = n * static_cast<__int128>(x) - sx, v = n * static_cast<__int128>(y) - sy;
      s[2][0] += u * u;
      s[1][1] += u * v;
      s[0][2] += v * v;
      s[3][0] += u * u * u;
      s[2][1] += u * u * v;
      s[1][2] += u * v * v;
      s[0][3] += v * v * v;
    }
  // eta_pq = mu_pq / N^(1 + (p+q)/2) and mu_pq = s_pq / N^(p+q).
  const double N = static_cast<double>(n);
  auto eta = [&](int p, int q) {
    const int k = p + q;
    return static_cast<double>(s[p][q]) / std::pow(N, k) / std::pow(N, 1.0 + 0.5 * k);
  };
  const double n20 = eta(2, 0), n02 = eta(0, 2), n11 = eta(1, 1);
  const double n30 = eta(3, 0), n03 = eta(0, 3), n21 = eta(2, 1), n12 = eta(1, 2);
  const double a = n30 + n12, b = n21 + n03;
  const double c = n30 - 3 * n12, d = 3 * n21 - n03;
  HuMoments h;
  h[0] = n20 + n02;
  h[1] = (n20 - n02) * (n20 - n02) + 4 * n11 * n11;
  h[2] = c * c + d * d;
  h[3] = a * a + b * b;
  h[4] = c * a * (a * a - 3 * b * b) + d * b * (3 * a * a - b * b);
  h[5] = (n20 - n02) * (a * a - b * b) + 4 * n11 * a * b;
  h[6] = d * a * (a * a - 3 * b * b) - c * b * (3 * a * a - b * b);
  return h;
}

/// sign(v) * log10|v|, with 0 kept at 0.
inline std::vector<double> log_magnitude(const HuMoments& h) {
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i)
    out[i] = h[i] == 0.0 ? 0.0 : std::copysign(std::log10(std::abs(h[i])), h[i]);
  return out;
}

inline constexpr std::size_t kHeritabilityCanvas = 128;

inline std::vector<double> region_descriptor(const std::vector<Point2>& pts, const std::string& region,
                                             std::size_t canvas = kHeritabilityCanvas) {
  return log_magnitude(hu_moments(rasterize_region(pts, canvas, region_is_closed(region))));
}

/// Region name -> distance(child, father) + distance(child, mother).
using HeritabilityMap = std::map<std::string, double>;

inline HeritabilityMap heritability_map(const LandmarkSet& child, const LandmarkSet& father, const LandmarkSet& mother,
                                        std::size_t canvas = kHeritabilityCanvas) {
  HeritabilityMap map;
  for (const auto& name : region_names()) {
    for (const auto* set : {&child, &father, &mother})
      if (!set->regions.count(name)) throw LandmarkError("landmark set is missing region '" + name + "'");
    const auto c = region_descriptor(child.regions.at(name), name, canvas);
    const auto f = region_descriptor(father.regions.at(name), name, canvas);
    const auto m = region_descriptor(mother.regions.at(name), name, canvas);
    map[name] = cosine_distance(c, f) + cosine_distance(c, m);
  }
  return map;
}

inline HeritabilityMap mean_map(const std::vector<HeritabilityMap>& maps) {
  if (maps.empty()) throw std::invalid_argument("mean_map: no maps");
  HeritabilityMap out;
  for (const auto& m : maps)
    for (const auto& [k, v] : m) out[k] += v;
  for (auto& [k, v] : out) v /= static_cast<double>(maps.size());
  return out;
}

}  // namespace kinface::eval
