#ifndef WAVEMAP_DELAUNAY_HPP
#define WAVEMAP_DELAUNAY_HPP

#include "wavemap/geometry.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <vector>

namespace wavemap
{

namespace detail
{

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double hash_unit(std::uint64_t a, std::uint64_t b)
{
  return static_cast<double>(splitmix64(a * 0x100000001b3ULL + b) >> 11) /
         9007199254740992.0;  // in [0,1)
}

inline long double orient2d(Point a, Point b, Point c)
{
  return (static_cast<long double>(b.x) - a.x) * (static_cast<long double>(c.y) - a.y) -
         (static_cast<long double>(b.y) - a.y) * (static_cast<long double>(c.x) - a.x);
}

// p strictly inside the circumcircle of ccw triangle (a,b,c)
inline bool in_circumcircle(Point a, Point b, Point c, Point p)
{
  const long double ax = a.x - p.x, ay = a.y - p.y;
  const long double bx = b.x - p.x, by = b.y - p.y;
  const long double cx = c.x - p.x, cy = c.y - p.y;
  const long double det = (ax * ax + ay * ay) * (bx * cy - cx * by) -
                          (bx * bx + by * by) * (ax * cy - cx * ay) +
                          (cx * cx + cy * cy) * (ax * by - bx * ay);
  return det > 0.0L;
}

}  // namespace detail

/// Incremental Bowyer-Watson triangulation of a planar point set.
/// Returns ccw triangles covering the convex hull.
inline std::vector<std::array<int, 3>> delaunay_triangulate(const std::vector<Point>& pts)
{
  const int n = static_cast<int>(pts.size());
  std::vector<std::array<int, 3>> tris;
  if (n < 3) return tris;

  double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
  for (const auto& p : pts)
  {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double cx = 0.5 * (xmin + xmax);
  const double cy = 0.5 * (ymin + ymax);
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});

  // deterministic symbolic jitter: degenerate inputs (grids, cocircular
  // rings) make the strict incircle sign a coin flip and the cavity search
  // non-star-shaped; a perturbation far below the point spacing breaks the
  // ties without changing the triangulation of well-separated points
  std::vector<Point> v(pts);
  for (int i = 0; i < n; ++i)
  {
    v[i].x += (detail::hash_unit(0xD31AULL, 2 * static_cast<std::uint64_t>(i)) - 0.5) *
              1e-10 * span;
    v[i].y +=
        (detail::hash_unit(0xD31AULL, 2 * static_cast<std::uint64_t>(i) + 1) - 0.5) *
        1e-10 * span;
  }
  v.push_back({cx - 40.0 * span, cy - 20.0 * span});  // n
  v.push_back({cx + 40.0 * span, cy - 20.0 * span});  // n+1
  v.push_back({cx, cy + 40.0 * span});                // n+2

  struct Tri
  {
    int a, b, c;
    bool alive;
  };
  std::vector<Tri> pool;
  pool.push_back({n, n + 1, n + 2, true});

  std::vector<int> bad;
  std::map<std::pair<int, int>, int> edge_count;
  for (int ip = 0; ip < n; ++ip)
  {
    bad.clear();
    for (int t = 0; t < static_cast<int>(pool.size()); ++t)
    {
      if (!pool[t].alive) continue;
      if (detail::in_circumcircle(v[pool[t].a], v[pool[t].b], v[pool[t].c], v[ip]))
        bad.push_back(t);
    }
    edge_count.clear();
    auto note_edge = [&](int a, int b) {
      auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
      ++edge_count[key];
    };
    for (int t : bad)
    {
      note_edge(pool[t].a, pool[t].b);
      note_edge(pool[t].b, pool[t].c);
      note_edge(pool[t].c, pool[t].a);
      pool[t].alive = false;
    }
    // cavity boundary edges appear exactly once
    for (int t : bad)
    {
      const std::array<std::pair<int, int>, 3> edges = {
          std::make_pair(pool[t].a, pool[t].b), std::make_pair(pool[t].b, pool[t].c),
          std::make_pair(pool[t].c, pool[t].a)};
      for (auto [a, b] : edges)
      {
        auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
        if (edge_count[key] != 1) continue;
        if (detail::orient2d(v[a], v[b], v[ip]) > 0.0L)
          pool.push_back({a, b, ip, true});
        else
          pool.push_back({b, a, ip, true});
      }
    }
  }

  for (const auto& t : pool)
  {
    if (!t.alive) continue;
    if (t.a >= n || t.b >= n || t.c >= n) continue;
    tris.push_back({t.a, t.b, t.c});
  }
  return tris;
}

}  // namespace wavemap

#endif
