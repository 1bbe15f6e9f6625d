#ifndef WAVEMAP_GEOMETRY_HPP
#define WAVEMAP_GEOMETRY_HPP

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace wavemap
{

using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat7 = Eigen::Matrix<double, 7, 7>;

struct Point
{
  double x = 0.0;
  double y = 0.0;
};

struct Rect
{
  double xmin, xmax, ymin, ymax;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }

  bool contains(Point p) const
  {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
  bool strictly_contains(Point p) const
  {
    return p.x > xmin && p.x < xmax && p.y > ymin && p.y < ymax;
  }
};

/// The 7 parameters describing an elliptical inclusion and its material:
/// center, semi-axes, rotation against the positive x-axis, density and
/// P-wave speed. All values dimensionless.
struct InclusionParams
{
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;      // semi-major axis
  double b = 1.0;      // semi-minor axis
  double theta = 0.0;  // radians
  double rho = 1.0;
  double vp = 1.0;

  Vec7 to_vector() const
  {
    Vec7 v;
    v << cx, cy, a, b, theta, rho, vp;
    return v;
  }

  static InclusionParams from_vector(const Vec7& v)
  {
    return InclusionParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }

  void validate() const
  {
    if (!(a > 0.0 && b > 0.0 && rho > 0.0 && vp > 0.0))
      throw std::domain_error("inclusion: a, b, rho, vp must be positive");
  }
};

struct LayerProps
{
  double rho;
  double vp;
};

/// Horizontally layered background over a computational rectangle with the
/// free surface at y = 0. `interfaces` are strictly decreasing depths
/// splitting the rectangle into interfaces.size()+1 layers, top first.
struct LayeredModel
{
  Rect rect{-1.5, 1.5, -3.0, 0.0};
  std::vector<double> interfaces;
  std::vector<LayerProps> layers{{1.0, 1.0}};

  void validate() const
  {
    if (layers.size() != interfaces.size() + 1)
      throw std::domain_error("layered model: need one more layer than interfaces");
    for (std::size_t i = 0; i < interfaces.size(); ++i)
    {
      if (!(interfaces[i] > rect.ymin && interfaces[i] < rect.ymax))
        throw std::domain_error("layered model: interface outside rectangle interior");
      if (i > 0 && !(interfaces[i] < interfaces[i - 1]))
        throw std::domain_error("layered model: interfaces must strictly decrease");
    }
    for (const auto& l : layers)
      if (!(l.rho > 0.0 && l.vp > 0.0))
        throw std::domain_error("layered model: rho, vp must be positive");
  }

  /// Index of the layer containing depth y. Points exactly on an interface
  /// resolve to the layer above.
  int layer_index(double y) const
  {
    int idx = 0;
    for (double d : interfaces)
    {
      if (y >= d) return idx;
      ++idx;
    }
    return idx;
  }

  /// Top/bottom depths of layer `idx`.
  std::pair<double, double> layer_band(int idx) const
  {
    const double top = idx == 0 ? rect.ymax : interfaces[idx - 1];
    const double bot = idx == static_cast<int>(interfaces.size()) ? rect.ymin
                                                                  : interfaces[idx];
    return {top, bot};
  }

  int layer_count() const { return static_cast<int>(layers.size()); }
};

/// Physical-to-dimensionless conversion scales.
struct Nondimensionalizer
{
  double T_scale = 1.0;       // seconds
  double L_scale = 1000.0;    // meters
  double rho_scale = 1000.0;  // kg/m^3

  void validate() const
  {
    if (!(T_scale > 0.0 && L_scale > 0.0 && rho_scale > 0.0))
      throw std::domain_error("nondimensionalizer: scales must be positive");
  }
};

inline std::pair<double, double> nondimensionalize(const Nondimensionalizer& nd,
                                                   double rho_phys, double v_phys)
{
  nd.validate();
  if (!(rho_phys > 0.0 && v_phys > 0.0))
    throw std::domain_error("nondimensionalize: inputs must be positive");
  return {rho_phys / nd.rho_scale, v_phys * nd.T_scale / nd.L_scale};
}

/// Boundary counted as inside (closed region).
inline bool inside_ellipse(const InclusionParams& inc, Point p)
{
  const double dx = p.x - inc.cx;
  const double dy = p.y - inc.cy;
  const double c = std::cos(inc.theta);
  const double s = std::sin(inc.theta);
  const double u = (dx * c + dy * s) / inc.a;
  const double v = (-dx * s + dy * c) / inc.b;
  return u * u + v * v <= 1.0;
}

struct Material
{
  double rho;
  double chi;  // lambda + 2 mu = rho * vp^2
};

/// Pointwise material fields: the inclusion overrides whatever layer it
/// overlaps; elsewhere the containing layer applies.
inline Material material_at(const LayeredModel& model, const InclusionParams* inc,
                            Point p)
{
  if (!model.rect.contains(p))
    throw std::domain_error("material_at: point outside computational rectangle");
  if (inc != nullptr && inside_ellipse(*inc, p))
    return {inc->rho, inc->rho * inc->vp * inc->vp};
  const LayerProps& l = model.layers[static_cast<std::size_t>(model.layer_index(p.y))];
  return {l.rho, l.rho * l.vp * l.vp};
}

inline Material material_at(const LayeredModel& model, const InclusionParams& inc,
                            Point p)
{
  return material_at(model, &inc, p);
}

// --- signed distance functions (negative inside) -------------------------

using SignedDistance = std::function<double(Point)>;

inline SignedDistance sd_rect(Rect r)
{
  return [r](Point p) {
    const double dx = std::max(r.xmin - p.x, p.x - r.xmax);
    const double dy = std::max(r.ymin - p.y, p.y - r.ymax);
    if (dx <= 0.0 && dy <= 0.0) return std::max(dx, dy);
    const double px = std::max(dx, 0.0);
    const double py = std::max(dy, 0.0);
    return std::hypot(px, py);
  };
}

/// Distance to a rotated ellipse via the scaled algebraic value: the level
/// function sqrt(Q)-1 divided by its local gradient norm. Accurate near the
/// boundary, which is all the meshing forces need.
inline SignedDistance sd_ellipse(InclusionParams inc)
{
  return [inc](Point p) {
    const double dx = p.x - inc.cx;
    const double dy = p.y - inc.cy;
    const double c = std::cos(inc.theta);
    const double s = std::sin(inc.theta);
    const double u = (dx * c + dy * s) / inc.a;
    const double v = (-dx * s + dy * c) / inc.b;
    const double q = std::sqrt(u * u + v * v);
    if (q < 1e-14) return -std::min(inc.a, inc.b);
    // grad of sqrt(Q) in physical coordinates
    const double gu = u / (inc.a * q);
    const double gv = v / (inc.b * q);
    const double gnorm = std::hypot(gu, gv);
    return (q - 1.0) / gnorm;
  };
}

inline SignedDistance sd_intersect(SignedDistance f, SignedDistance g)
{
  return [f = std::move(f), g = std::move(g)](Point p) {
    return std::max(f(p), g(p));
  };
}

inline SignedDistance sd_union(SignedDistance f, SignedDistance g)
{
  return [f = std::move(f), g = std::move(g)](Point p) {
    return std::min(f(p), g(p));
  };
}

inline SignedDistance sd_difference(SignedDistance f, SignedDistance g)
{
  return [f = std::move(f), g = std::move(g)](Point p) {
    return std::max(f(p), -g(p));
  };
}

/// Horizontal band of the rectangle between depths [bot, top].
inline SignedDistance sd_band(Rect r, double top, double bot)
{
  return sd_rect(Rect{r.xmin, r.xmax, bot, top});
}

/// One signed distance per material region: layer bands (with the ellipse
/// carved out of any layer it overlaps) followed by the ellipse itself when
/// present. Region index == material region label used by meshes.
inline std::vector<SignedDistance> scene_signed_distances(const LayeredModel& model,
                                                          const InclusionParams* inc)
{
  model.validate();
  if (inc != nullptr)
  {
    inc->validate();
    const double r = std::max(inc->a, inc->b);
    const Rect& rc = model.rect;
    if (!(inc->cx - r > rc.xmin && inc->cx + r < rc.xmax && inc->cy - r > rc.ymin &&
          inc->cy + r < rc.ymax))
      throw std::domain_error("scene: inclusion touches the rectangle boundary");
  }
  std::vector<SignedDistance> regions;
  for (int l = 0; l < model.layer_count(); ++l)
  {
    auto [top, bot] = model.layer_band(l);
    SignedDistance band = sd_band(model.rect, top, bot);
    if (inc != nullptr)
      band = sd_difference(std::move(band), sd_ellipse(*inc));
    regions.push_back(std::move(band));
  }
  if (inc != nullptr) regions.push_back(sd_ellipse(*inc));
  return regions;
}

}  // namespace wavemap

#endif
