#ifndef WAVEMAP_MESH_HPP
#define WAVEMAP_MESH_HPP

#include "wavemap/delaunay.hpp"
#include "wavemap/geometry.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavemap
{

struct ConfigError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

enum class EdgeKind
{
  surface,
  absorbing,
  interior
};

struct BoundaryEdge
{
  int a, b;
  int tri;  // owning triangle
  EdgeKind kind;
};

struct Mesh
{
  std::vector<Point> points;
  std::vector<std::array<int, 3>> triangles;  // ccw
  std::vector<int> region_label;
  std::vector<BoundaryEdge> boundary_edges;
  Rect rect{0, 1, 0, 1};

  int point_count() const { return static_cast<int>(points.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }

  double triangle_area(int t) const
  {
    const auto& tr = triangles[t];
    const Point& p0 = points[tr[0]];
    const Point& p1 = points[tr[1]];
    const Point& p2 = points[tr[2]];
    return 0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x));
  }

  Point barycenter(int t) const
  {
    const auto& tr = triangles[t];
    return {(points[tr[0]].x + points[tr[1]].x + points[tr[2]].x) / 3.0,
            (points[tr[0]].y + points[tr[1]].y + points[tr[2]].y) / 3.0};
  }

  /// Normalized radius ratio 2 r_in / r_circ; 1 for equilateral.
  double triangle_quality(int t) const
  {
    const auto& tr = triangles[t];
    const Point& p0 = points[tr[0]];
    const Point& p1 = points[tr[1]];
    const Point& p2 = points[tr[2]];
    const double a = std::hypot(p1.x - p2.x, p1.y - p2.y);
    const double b = std::hypot(p0.x - p2.x, p0.y - p2.y);
    const double c = std::hypot(p0.x - p1.x, p0.y - p1.y);
    return (b + c - a) * (c + a - b) * (a + b - c) / (a * b * c);
  }
};

enum class MeshRegime
{
  uniform,
  stratified,
  adapted
};

struct MeshSpec
{
  MeshRegime regime = MeshRegime::uniform;
  double h = 0.04;
  LayeredModel model;
  std::optional<InclusionParams> inclusion;
};

namespace detail
{

inline void classify_boundary(Mesh& mesh)
{
  std::map<std::pair<int, int>, std::pair<int, int>> count;  // edge -> (count, tri)
  for (int t = 0; t < mesh.triangle_count(); ++t)
  {
    const auto& tr = mesh.triangles[t];
    for (int e = 0; e < 3; ++e)
    {
      int a = tr[e], b = tr[(e + 1) % 3];
      auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
      auto it = count.find(key);
      if (it == count.end())
        count[key] = {1, t};
      else
        it->second.first++;
    }
  }
  mesh.boundary_edges.clear();
  const double ytol = 1e-9;
  for (const auto& [key, val] : count)
  {
    if (val.first != 1) continue;
    const bool on_surface = std::abs(mesh.points[key.first].y - mesh.rect.ymax) < ytol &&
                            std::abs(mesh.points[key.second].y - mesh.rect.ymax) < ytol;
    mesh.boundary_edges.push_back(
        {key.first, key.second, val.second,
         on_surface ? EdgeKind::surface : EdgeKind::absorbing});
  }
}

inline int label_by_barycenter(const LayeredModel& model,
                               const InclusionParams* inc, Point bary)
{
  if (inc != nullptr && inside_ellipse(*inc, bary)) return model.layer_count();
  return model.layer_index(bary.y);
}

// Structured band mesh: x grid shared by all bands, y grid snapped to the
// interface depths.
inline Mesh banded_mesh(const MeshSpec& spec, bool require_divisible)
{
  const LayeredModel& model = spec.model;
  model.validate();
  const double h = spec.h;
  if (!(h > 0.0)) throw ConfigError("mesh: h must be positive");
  const Rect& rect = model.rect;

  auto divisions = [&](double len, const char* what) {
    const double q = len / h;
    const int n = static_cast<int>(std::lround(q));
    if (require_divisible && std::abs(q - n) > 1e-9)
      throw ConfigError(std::string("uniform mesh: rectangle ") + what +
                        " is not an integer multiple of h");
    return std::max(n, 1);
  };

  const int nx = divisions(rect.width(), "width");

  // y levels: every interface is a grid row
  std::vector<double> cuts = {rect.ymax};
  for (double d : model.interfaces) cuts.push_back(d);
  cuts.push_back(rect.ymin);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    if (cuts[i] - cuts[i + 1] < 0.5 * h)
      throw ConfigError("stratified mesh: interfaces closer than h/2");

  std::vector<double> ys;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
  {
    const double top = cuts[i], bot = cuts[i + 1];
    const int ny = divisions(top - bot, "height");
    for (int j = 0; j < ny; ++j) ys.push_back(top + (bot - top) * j / ny);
  }
  ys.push_back(rect.ymin);

  Mesh mesh;
  mesh.rect = rect;
  const int rows = static_cast<int>(ys.size());
  mesh.points.reserve(static_cast<std::size_t>(rows) * (nx + 1));
  for (int r = 0; r < rows; ++r)
    for (int i = 0; i <= nx; ++i)
      mesh.points.push_back({rect.xmin + rect.width() * i / nx, ys[r]});

  const InclusionParams* inc =
      spec.inclusion.has_value() ? &spec.inclusion.value() : nullptr;
  auto idx = [nx](int r, int i) { return r * (nx + 1) + i; };
  for (int r = 0; r + 1 < rows; ++r)
  {
    for (int i = 0; i < nx; ++i)
    {
      // ccw with y decreasing downwards: row r is above row r+1
      mesh.triangles.push_back({idx(r, i), idx(r + 1, i), idx(r + 1, i + 1)});
      mesh.triangles.push_back({idx(r, i), idx(r + 1, i + 1), idx(r, i + 1)});
    }
  }
  mesh.region_label.resize(mesh.triangles.size());
  for (int t = 0; t < mesh.triangle_count(); ++t)
    mesh.region_label[t] = label_by_barycenter(model, inc, mesh.barycenter(t));
  classify_boundary(mesh);
  return mesh;
}

}  // namespace detail

inline Mesh uniform_mesh(const MeshSpec& spec)
{
  // mesh the plain rectangle, then label against the full layer stack
  MeshSpec flat = spec;
  flat.model.interfaces.clear();
  flat.model.layers = {spec.model.layers.empty() ? LayerProps{1.0, 1.0}
                                                 : spec.model.layers[0]};
  Mesh mesh = detail::banded_mesh(flat, true);
  const InclusionParams* inc =
      spec.inclusion.has_value() ? &spec.inclusion.value() : nullptr;
  for (int t = 0; t < mesh.triangle_count(); ++t)
    mesh.region_label[t] =
        detail::label_by_barycenter(spec.model, inc, mesh.barycenter(t));
  return mesh;
}

inline Mesh stratified_mesh(const MeshSpec& spec)
{
  return detail::banded_mesh(spec, false);
}

// --- conformity ----------------------------------------------------------

struct ConformityReport
{
  bool ok = true;
  std::vector<int> violating_triangles;
};

/// A triangle conforms when all three vertices and the barycenter lie in a
/// single region (signed distance <= +tol).
inline ConformityReport conformity_check(const Mesh& mesh,
                                         const std::vector<SignedDistance>& regions,
                                         double tol = 1e-9)
{
  ConformityReport report;
  for (int t = 0; t < mesh.triangle_count(); ++t)
  {
    const auto& tr = mesh.triangles[t];
    const Point bary = mesh.barycenter(t);
    bool found = false;
    for (const auto& sd : regions)
    {
      if (sd(bary) <= tol && sd(mesh.points[tr[0]]) <= tol &&
          sd(mesh.points[tr[1]]) <= tol && sd(mesh.points[tr[2]]) <= tol)
      {
        found = true;
        break;
      }
    }
    if (!found)
    {
      report.ok = false;
      report.violating_triangles.push_back(t);
    }
  }
  return report;
}

struct TopologyReport
{
  bool ok = true;
  int nonpositive_triangles = 0;
  int bad_edges = 0;  // shared by >2 triangles
};

inline TopologyReport topology_audit(const Mesh& mesh)
{
  TopologyReport rep;
  for (int t = 0; t < mesh.triangle_count(); ++t)
    if (mesh.triangle_area(t) <= 1e-14) ++rep.nonpositive_triangles;
  std::map<std::pair<int, int>, int> count;
  for (const auto& tr : mesh.triangles)
    for (int e = 0; e < 3; ++e)
    {
      int a = tr[e], b = tr[(e + 1) % 3];
      ++count[a < b ? std::make_pair(a, b) : std::make_pair(b, a)];
    }
  for (const auto& [key, c] : count)
    if (c > 2) ++rep.bad_edges;
  rep.ok = rep.nonpositive_triangles == 0 && rep.bad_edges == 0;
  return rep;
}

// --- adapted (force-equilibrium) meshing ---------------------------------

struct MeshingError : std::runtime_error
{
  Mesh last_mesh;
  double displacement = 0.0;
  MeshingError(const std::string& msg, Mesh m, double disp)
      : std::runtime_error(msg), last_mesh(std::move(m)), displacement(disp)
  {
  }
};

namespace detail
{

inline Point ellipse_point(const InclusionParams& inc, double phi)
{
  const double c = std::cos(inc.theta), s = std::sin(inc.theta);
  const double ex = inc.a * std::cos(phi), ey = inc.b * std::sin(phi);
  return {inc.cx + ex * c - ey * s, inc.cy + ex * s + ey * c};
}

/// Nodes spaced uniformly in arc length along the ellipse boundary.
inline std::vector<Point> ellipse_boundary_nodes(InclusionParams inc, double h)
{
  if (inc.a == inc.b) inc.theta = 0.0;  // circles are rotation invariant
  const int fine = 4096;
  std::vector<double> arc(fine + 1, 0.0);
  Point prev = ellipse_point(inc, 0.0);
  for (int i = 1; i <= fine; ++i)
  {
    Point cur = ellipse_point(inc, 2.0 * M_PI * i / fine);
    arc[i] = arc[i - 1] + std::hypot(cur.x - prev.x, cur.y - prev.y);
    prev = cur;
  }
  const double perim = arc[fine];
  const int n = std::max(12, static_cast<int>(std::lround(perim / h)));
  std::vector<Point> nodes;
  nodes.reserve(n);
  int j = 0;
  for (int k = 0; k < n; ++k)
  {
    const double target = perim * k / n;
    while (j < fine && arc[j + 1] < target) ++j;
    const double t0 = arc[j], t1 = arc[j + 1];
    const double w = t1 > t0 ? (target - t0) / (t1 - t0) : 0.0;
    const double phi = 2.0 * M_PI * (j + w) / fine;
    nodes.push_back(ellipse_point(inc, phi));
  }
  return nodes;
}

inline std::vector<double> linspace(double a, double b, int n)
{
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

struct RegionMesh
{
  std::vector<Point> points;
  std::vector<std::array<int, 3>> triangles;
};

/// Persson-Strang force equilibrium restricted to one region with its
/// boundary nodes pinned.
inline RegionMesh relax_region(const SignedDistance& sd,
                               const std::vector<Point>& pinned, Rect bbox, double h,
                               std::uint64_t jitter_seed, double& out_disp,
                               bool& converged)
{
  const double geps = 1e-3 * h;
  std::vector<Point> pts = pinned;
  const int n_pinned = static_cast<int>(pinned.size());

  // hexagonal interior seeding, clear of the pinned boundary ring
  const double dy = h * std::sqrt(3.0) / 2.0;
  int row = 0;
  for (double y = bbox.ymin + 0.5 * dy; y < bbox.ymax; y += dy, ++row)
  {
    const double off = (row % 2 == 0) ? 0.0 : 0.5 * h;
    for (double x = bbox.xmin + off; x < bbox.xmax; x += h)
    {
      Point p{x, y};
      if (sd(p) > -0.6 * h) continue;
      const std::uint64_t k = static_cast<std::uint64_t>(pts.size());
      p.x += (hash_unit(jitter_seed, 2 * k) - 0.5) * 2e-4 * h;
      p.y += (hash_unit(jitter_seed, 2 * k + 1) - 0.5) * 2e-4 * h;
      pts.push_back(p);
    }
  }

  auto numeric_project = [&](Point p) {
    // project onto the zero level set via the numerical gradient
    for (int it = 0; it < 3; ++it)
    {
      const double d = sd(p);
      if (d <= 0.0) break;
      const double eps = 1e-7;
      const double gx = (sd({p.x + eps, p.y}) - d) / eps;
      const double gy = (sd({p.x, p.y + eps}) - d) / eps;
      const double g2 = gx * gx + gy * gy;
      if (g2 < 1e-20) break;
      p.x -= d * gx / g2;
      p.y -= d * gy / g2;
    }
    return p;
  };

  std::vector<std::array<int, 3>> tris;
  std::vector<std::pair<int, int>> bars;
  auto retriangulate = [&]() {
    tris = delaunay_triangulate(pts);
    std::vector<std::array<int, 3>> kept;
    for (const auto& t : tris)
    {
      Point bary{(pts[t[0]].x + pts[t[1]].x + pts[t[2]].x) / 3.0,
                 (pts[t[0]].y + pts[t[1]].y + pts[t[2]].y) / 3.0};
      if (sd(bary) < -geps) kept.push_back(t);
    }
    tris = std::move(kept);
    std::map<std::pair<int, int>, bool> seen;
    bars.clear();
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e)
      {
        int a = t[e], b = t[(e + 1) % 3];
        auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
        if (!seen[key])
        {
          seen[key] = true;
          bars.push_back(key);
        }
      }
  };

  retriangulate();
  std::vector<Point> last_tri_pos = pts;
  std::vector<Point> force(pts.size());
  converged = false;
  double max_disp = 0.0;
  for (int iter = 0; iter < 2000; ++iter)
  {
    // retriangulate when points drifted since the last triangulation
    double drift = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      drift = std::max(drift, std::hypot(pts[i].x - last_tri_pos[i].x,
                                         pts[i].y - last_tri_pos[i].y));
    if (drift > 0.1 * h)
    {
      retriangulate();
      last_tri_pos = pts;
    }

    std::fill(force.begin(), force.end(), Point{0.0, 0.0});
    for (auto [i, j] : bars)
    {
      const double dx = pts[i].x - pts[j].x;
      const double dy2 = pts[i].y - pts[j].y;
      const double len = std::hypot(dx, dy2);
      const double f = std::max(h - len, 0.0);
      if (f <= 0.0 || len < 1e-14) continue;
      force[i].x += f * dx / len;
      force[i].y += f * dy2 / len;
      force[j].x -= f * dx / len;
      force[j].y -= f * dy2 / len;
    }

    max_disp = 0.0;
    for (int i = n_pinned; i < static_cast<int>(pts.size()); ++i)
    {
      Point next{pts[i].x + 0.2 * force[i].x, pts[i].y + 0.2 * force[i].y};
      if (sd(next) > 0.0) next = numeric_project(next);
      max_disp = std::max(max_disp, std::hypot(next.x - pts[i].x, next.y - pts[i].y));
      pts[i] = next;
    }
    if (max_disp < 1e-3 * h)
    {
      converged = true;
      break;
    }
  }
  out_disp = max_disp;
  retriangulate();
  return {std::move(pts), std::move(tris)};
}

}  // namespace detail

inline Mesh adapted_mesh(const MeshSpec& spec)
{
  const LayeredModel& model = spec.model;
  model.validate();
  if (!spec.inclusion.has_value())
    throw ConfigError("adapted mesh: inclusion parameters required");
  const InclusionParams& inc = *spec.inclusion;
  inc.validate();
  const double h = spec.h;
  const Rect& rect = model.rect;
  const double r = std::max(inc.a, inc.b);
  if (!(inc.cx - r >= rect.xmin + 2 * h && inc.cx + r <= rect.xmax - 2 * h &&
        inc.cy - r >= rect.ymin + 2 * h && inc.cy + r <= rect.ymax - 2 * h))
    throw ConfigError("adapted mesh: inclusion must clear the boundary by 2h");

  const int L = model.layer_count();
  auto regions = scene_signed_distances(model, &inc);

  // shared pinned node sets
  const int nx = std::max(1, static_cast<int>(std::lround(rect.width() / h)));
  const auto xs = detail::linspace(rect.xmin, rect.xmax, nx + 1);
  std::vector<std::vector<Point>> hline(L + 1);  // cut lines, top to bottom
  std::vector<double> cuts = {rect.ymax};
  for (double d : model.interfaces) cuts.push_back(d);
  cuts.push_back(rect.ymin);
  for (int i = 0; i <= L; ++i)
    for (double x : xs) hline[i].push_back({x, cuts[i]});
  const auto ellipse_nodes = detail::ellipse_boundary_nodes(inc, h);

  auto run_regions = [&](std::uint64_t seed) {
    std::vector<detail::RegionMesh> rmeshes;
    for (int l = 0; l < L; ++l)
    {
      const double top = cuts[l], bot = cuts[l + 1];
      std::vector<Point> pinned;
      for (const Point& p : hline[l])
        if (!inside_ellipse(inc, p)) pinned.push_back(p);
      for (const Point& p : hline[l + 1])
        if (!inside_ellipse(inc, p)) pinned.push_back(p);
      const int ny = std::max(2, static_cast<int>(std::lround((top - bot) / h)) + 1);
      const auto edge_y = detail::linspace(top, bot, ny);
      for (std::size_t i = 1; i + 1 < edge_y.size(); ++i)
      {
        pinned.push_back({rect.xmin, edge_y[i]});
        pinned.push_back({rect.xmax, edge_y[i]});
      }
      for (const Point& p : ellipse_nodes)
        if (p.y <= top + 1e-12 && p.y >= bot - 1e-12) pinned.push_back(p);
      double disp = 0.0;
      bool conv = false;
      auto rm = detail::relax_region(regions[l], pinned,
                                     Rect{rect.xmin, rect.xmax, bot, top}, h,
                                     seed + l, disp, conv);
      if (!conv)
      {
        Mesh partial;
        partial.rect = rect;
        partial.points = rm.points;
        partial.triangles = rm.triangles;
        partial.region_label.assign(rm.triangles.size(), l);
        throw MeshingError("adapted mesh: layer region did not reach equilibrium",
                           std::move(partial), disp);
      }
      rmeshes.push_back(std::move(rm));
    }
    {
      double disp = 0.0;
      bool conv = false;
      auto rm = detail::relax_region(
          regions[L], ellipse_nodes,
          Rect{inc.cx - r, inc.cx + r, inc.cy - r, inc.cy + r}, h, seed + L, disp,
          conv);
      if (!conv)
      {
        Mesh partial;
        partial.rect = rect;
        partial.points = rm.points;
        partial.triangles = rm.triangles;
        partial.region_label.assign(rm.triangles.size(), L);
        throw MeshingError("adapted mesh: inclusion region did not reach equilibrium",
                           std::move(partial), disp);
      }
      rmeshes.push_back(std::move(rm));
    }
    return rmeshes;
  };

  auto merge = [&](const std::vector<detail::RegionMesh>& rmeshes) {
    Mesh mesh;
    mesh.rect = rect;
    std::map<std::pair<std::int64_t, std::int64_t>, int> lookup;
    auto key_of = [](Point p) {
      return std::make_pair(static_cast<std::int64_t>(std::llround(p.x * 1e9)),
                            static_cast<std::int64_t>(std::llround(p.y * 1e9)));
    };
    for (int l = 0; l < static_cast<int>(rmeshes.size()); ++l)
    {
      std::vector<int> remap(rmeshes[l].points.size());
      for (std::size_t i = 0; i < rmeshes[l].points.size(); ++i)
      {
        auto key = key_of(rmeshes[l].points[i]);
        auto it = lookup.find(key);
        if (it == lookup.end())
        {
          lookup[key] = mesh.point_count();
          remap[i] = mesh.point_count();
          mesh.points.push_back(rmeshes[l].points[i]);
        }
        else
          remap[i] = it->second;
      }
      for (const auto& t : rmeshes[l].triangles)
      {
        std::array<int, 3> tr = {remap[t[0]], remap[t[1]], remap[t[2]]};
        const Point& p0 = mesh.points[tr[0]];
        const Point& p1 = mesh.points[tr[1]];
        const Point& p2 = mesh.points[tr[2]];
        if ((p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x) < 0.0)
          std::swap(tr[1], tr[2]);
        mesh.triangles.push_back(tr);
        mesh.region_label.push_back(l);
      }
    }
    detail::classify_boundary(mesh);
    return mesh;
  };

  // one jittered retry when the quality floor is missed
  for (int attempt = 0; attempt < 2; ++attempt)
  {
    Mesh mesh = merge(run_regions(attempt == 0 ? 1234567ULL : 7654321ULL));
    double qmin = 1.0;
    for (int t = 0; t < mesh.triangle_count(); ++t)
      qmin = std::min(qmin, mesh.triangle_quality(t));
    if (qmin > 0.3) return mesh;
    if (attempt == 1)
      throw MeshingError("adapted mesh: triangle quality below 0.3 after retry",
                         std::move(mesh), qmin);
  }
  throw MeshingError("unreachable", Mesh{}, 0.0);
}

inline Mesh generate_mesh(const MeshSpec& spec)
{
  switch (spec.regime)
  {
    case MeshRegime::uniform: return uniform_mesh(spec);
    case MeshRegime::stratified: return stratified_mesh(spec);
    case MeshRegime::adapted: return adapted_mesh(spec);
  }
  throw ConfigError("unknown mesh regime");
}

// --- plain-text mesh format ----------------------------------------------

inline void write_mesh(std::ostream& os, const Mesh& mesh)
{
  os.precision(17);
  os << "points " << mesh.point_count() << "\n";
  for (const auto& p : mesh.points) os << p.x << " " << p.y << "\n";
  os << "triangles " << mesh.triangle_count() << "\n";
  for (int t = 0; t < mesh.triangle_count(); ++t)
    os << mesh.triangles[t][0] << " " << mesh.triangles[t][1] << " "
       << mesh.triangles[t][2] << " " << mesh.region_label[t] << "\n";
}

inline Mesh read_mesh(std::istream& is, Rect rect)
{
  Mesh mesh;
  mesh.rect = rect;
  std::string tag;
  int n = 0;
  if (!(is >> tag >> n) || tag != "points")
    throw ConfigError("mesh file: expected 'points N'");
  mesh.points.resize(n);
  for (auto& p : mesh.points)
    if (!(is >> p.x >> p.y)) throw ConfigError("mesh file: truncated point list");
  int m = 0;
  if (!(is >> tag >> m) || tag != "triangles")
    throw ConfigError("mesh file: expected 'triangles M'");
  mesh.triangles.resize(m);
  mesh.region_label.resize(m);
  for (int t = 0; t < m; ++t)
    if (!(is >> mesh.triangles[t][0] >> mesh.triangles[t][1] >> mesh.triangles[t][2] >>
          mesh.region_label[t]))
      throw ConfigError("mesh file: truncated triangle list");
  detail::classify_boundary(mesh);
  return mesh;
}

}  // namespace wavemap

#endif
