#ifndef WAVEMAP_FEM_HPP
#define WAVEMAP_FEM_HPP

#include "wavemap/geometry.hpp"
#include "wavemap/mesh.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace wavemap
{

using SpMat = Eigen::SparseMatrix<double>;

struct AssemblyError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

/// Superposed Gaussian surface sources centered at the emitter positions.
struct SourceField
{
  std::vector<double> emitters;  // x coordinates on y = 0
  double kappa = 0.04;           // Gaussian width (area)
  double f0 = 1.0;               // amplitude scale of the spatial profile

  double operator()(Point p) const
  {
    double sum = 0.0;
    for (double ex : emitters)
    {
      const double dx = p.x - ex;
      sum += std::exp(-(dx * dx + p.y * p.y) / kappa);
    }
    return f0 * sum / (M_PI * kappa);
  }
};

struct RegionProps
{
  double rho, chi, vp;
};

inline RegionProps region_props(const LayeredModel& model, const InclusionParams* inc,
                                int label)
{
  const int L = model.layer_count();
  if (label >= 0 && label < L)
  {
    const LayerProps& l = model.layers[static_cast<std::size_t>(label)];
    return {l.rho, l.rho * l.vp * l.vp, l.vp};
  }
  if (label == L && inc != nullptr)
    return {inc->rho, inc->rho * inc->vp * inc->vp, inc->vp};
  throw AssemblyError("region label out of range for the given scene");
}

/// Mass, stiffness, absorbing-boundary and load terms of the semi-discrete
/// system on a labeled mesh with per-region constant coefficients.
struct AssembledSystem
{
  SpMat B;               // mass, weight rho
  SpMat C;               // stiffness, weight chi
  SpMat E;               // boundary damping, weight chi / vp on absorbing edges
  Eigen::VectorXd h_vec; // load, weight rho * G
  int dof_count = 0;
};

namespace detail
{

struct ElementMatrices
{
  Eigen::Matrix3d mass;
  Eigen::Matrix3d stiffness;
  Eigen::Vector3d load;
};

inline ElementMatrices element_matrices(const Mesh& mesh, int t, double rho,
                                        double chi, const SourceField& source)
{
  const auto& tr = mesh.triangles[t];
  const Point& p0 = mesh.points[tr[0]];
  const Point& p1 = mesh.points[tr[1]];
  const Point& p2 = mesh.points[tr[2]];
  const double area = mesh.triangle_area(t);

  ElementMatrices em;
  Eigen::Matrix3d ones_plus_eye;
  ones_plus_eye << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  em.mass = rho * area / 12.0 * ones_plus_eye;

  // P1 gradients: grad psi_i = perp(edge opposite i) / (2 area)
  const double bx[3] = {p1.y - p2.y, p2.y - p0.y, p0.y - p1.y};
  const double by[3] = {p2.x - p1.x, p0.x - p2.x, p1.x - p0.x};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      em.stiffness(i, j) = chi * (bx[i] * bx[j] + by[i] * by[j]) / (4.0 * area);

  // degree-2 Gauss rule at the edge midpoints for the smooth Gaussian load
  const Point mids[3] = {{0.5 * (p0.x + p1.x), 0.5 * (p0.y + p1.y)},
                         {0.5 * (p1.x + p2.x), 0.5 * (p1.y + p2.y)},
                         {0.5 * (p2.x + p0.x), 0.5 * (p2.y + p0.y)}};
  // psi_i at midpoint of edge (j, j+1): 1/2 when i is an endpoint, else 0
  const double psi[3][3] = {{0.5, 0.0, 0.5}, {0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}};
  em.load.setZero();
  for (int q = 0; q < 3; ++q)
  {
    const double g = source(mids[q]);
    for (int i = 0; i < 3; ++i) em.load[i] += area / 3.0 * rho * g * psi[i][q];
  }
  return em;
}

inline Eigen::Matrix2d edge_matrix(const Mesh& mesh, const BoundaryEdge& be,
                                   double coeff)
{
  const Point& pa = mesh.points[be.a];
  const Point& pb = mesh.points[be.b];
  const double len = std::hypot(pb.x - pa.x, pb.y - pa.y);
  Eigen::Matrix2d m;
  m << 2, 1, 1, 2;
  return coeff * len / 6.0 * m;
}

}  // namespace detail

inline std::vector<int> triangle_labels(const Mesh& mesh, const LayeredModel& model,
                                        const InclusionParams* inc)
{
  std::vector<int> labels(mesh.triangles.size());
  for (int t = 0; t < mesh.triangle_count(); ++t)
    labels[t] = detail::label_by_barycenter(model, inc, mesh.barycenter(t));
  return labels;
}

inline AssembledSystem assemble(const Mesh& mesh, const LayeredModel& model,
                                const InclusionParams* inc, const SourceField& source)
{
  const int n = mesh.point_count();
  AssembledSystem sys;
  sys.dof_count = n;
  sys.h_vec = Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Triplet<double>> tb, tc, te;
  tb.reserve(static_cast<std::size_t>(mesh.triangle_count()) * 9);
  tc.reserve(static_cast<std::size_t>(mesh.triangle_count()) * 9);

  for (int t = 0; t < mesh.triangle_count(); ++t)
  {
    const RegionProps props = region_props(model, inc, mesh.region_label[t]);
    const auto em = detail::element_matrices(mesh, t, props.rho, props.chi, source);
    const auto& tr = mesh.triangles[t];
    for (int i = 0; i < 3; ++i)
    {
      sys.h_vec[tr[i]] += em.load[i];
      for (int j = 0; j < 3; ++j)
      {
        tb.emplace_back(tr[i], tr[j], em.mass(i, j));
        tc.emplace_back(tr[i], tr[j], em.stiffness(i, j));
      }
    }
  }

  for (const auto& be : mesh.boundary_edges)
  {
    if (be.kind != EdgeKind::absorbing) continue;
    const RegionProps props = region_props(model, inc, mesh.region_label[be.tri]);
    const auto em = detail::edge_matrix(mesh, be, props.chi / props.vp);
    const int idx[2] = {be.a, be.b};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) te.emplace_back(idx[i], idx[j], em(i, j));
  }

  sys.B.resize(n, n);
  sys.C.resize(n, n);
  sys.E.resize(n, n);
  sys.B.setFromTriplets(tb.begin(), tb.end());
  sys.C.setFromTriplets(tc.begin(), tc.end());
  sys.E.setFromTriplets(te.begin(), te.end());
  return sys;
}

/// Re-assemble only the triangles whose region label changes between the two
/// inclusions. Fixed-mesh regimes call this per proposal instead of a full
/// assembly.
inline AssembledSystem update_inclusion(const AssembledSystem& base, const Mesh& mesh,
                                        const LayeredModel& model,
                                        const InclusionParams* old_inc,
                                        const InclusionParams* new_inc,
                                        const SourceField& source)
{
  const auto old_labels = triangle_labels(mesh, model, old_inc);
  const auto new_labels = triangle_labels(mesh, model, new_inc);

  AssembledSystem sys = base;
  std::vector<char> changed(mesh.triangles.size(), 0);
  for (int t = 0; t < mesh.triangle_count(); ++t)
  {
    if (old_labels[t] == new_labels[t]) continue;
    changed[t] = 1;
    const RegionProps po = region_props(model, old_inc, old_labels[t]);
    const RegionProps pn = region_props(model, new_inc, new_labels[t]);
    const auto emo = detail::element_matrices(mesh, t, po.rho, po.chi, source);
    const auto emn = detail::element_matrices(mesh, t, pn.rho, pn.chi, source);
    const auto& tr = mesh.triangles[t];
    for (int i = 0; i < 3; ++i)
    {
      sys.h_vec[tr[i]] += emn.load[i] - emo.load[i];
      for (int j = 0; j < 3; ++j)
      {
        sys.B.coeffRef(tr[i], tr[j]) += emn.mass(i, j) - emo.mass(i, j);
        sys.C.coeffRef(tr[i], tr[j]) += emn.stiffness(i, j) - emo.stiffness(i, j);
      }
    }
  }
  for (const auto& be : mesh.boundary_edges)
  {
    if (be.kind != EdgeKind::absorbing || !changed[be.tri]) continue;
    const RegionProps po = region_props(model, old_inc, old_labels[be.tri]);
    const RegionProps pn = region_props(model, new_inc, new_labels[be.tri]);
    const auto emo = detail::edge_matrix(mesh, be, po.chi / po.vp);
    const auto emn = detail::edge_matrix(mesh, be, pn.chi / pn.vp);
    const int idx[2] = {be.a, be.b};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        sys.E.coeffRef(idx[i], idx[j]) += emn(i, j) - emo(i, j);
  }
  return sys;
}

inline AssembledSystem update_inclusion(const AssembledSystem& base, const Mesh& mesh,
                                        const LayeredModel& model,
                                        const InclusionParams& old_inc,
                                        const InclusionParams& new_inc,
                                        const SourceField& source)
{
  return update_inclusion(base, mesh, model, &old_inc, &new_inc, source);
}

}  // namespace wavemap

#endif
