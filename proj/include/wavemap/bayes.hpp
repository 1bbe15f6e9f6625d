#ifndef WAVEMAP_BAYES_HPP
#define WAVEMAP_BAYES_HPP

#include "wavemap/geometry.hpp"
#include "wavemap/mesh.hpp"
#include "wavemap/observation.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace wavemap
{

struct Dataset
{
  Acquisition acquisition;
  Eigen::MatrixXd data;
};

/// Prior, noise model, constraint box and the datasets entering the cost.
/// Normalization constants are dropped throughout; only ratios and argmins
/// are ever used.
struct PosteriorSpec
{
  Vec7 nu0 = Vec7::Zero();
  Mat7 gamma_pr = Mat7::Identity();
  double sigma_noise = 1.0;
  Rect rect{-1.5, 1.5, -3.0, 0.0};
  std::vector<Dataset> datasets;

  Mat7 gamma_pr_inv() const
  {
    return gamma_pr.llt().solve(Mat7::Identity());
  }

  Eigen::VectorXd stacked_data() const
  {
    Eigen::Index total = 0;
    for (const auto& ds : datasets) total += ds.data.size();
    Eigen::VectorXd out(total);
    Eigen::Index at = 0;
    for (const auto& ds : datasets)
    {
      out.segment(at, ds.data.size()) =
          Eigen::Map<const Eigen::VectorXd>(ds.data.data(), ds.data.size());
      at += ds.data.size();
    }
    return out;
  }
};

/// Maps an ellipse parameter vector to the canonical representative of the
/// same physical ellipse: nonnegative semi-axes, a >= b (a swap rotates theta
/// by pi/2), theta wrapped into [-pi/2, pi/2). The parametrization is 4-fold
/// redundant; the constraint set below keeps one sheet, and this map folds
/// the other sheets onto it. Genuine constraints (positive materials, the
/// bounding disk inside the rectangle) are left untouched.
inline Vec7 canonicalize_ellipse(Vec7 nu)
{
  nu[2] = std::abs(nu[2]);
  nu[3] = std::abs(nu[3]);
  if (nu[3] > nu[2])
  {
    std::swap(nu[2], nu[3]);
    nu[4] += M_PI / 2;
  }
  nu[4] -= M_PI * std::floor(nu[4] / M_PI + 0.5);
  if (nu[4] >= M_PI / 2) nu[4] = -M_PI / 2;  // half-open edge under rounding
  return nu;
}

/// Constraint set: positive geometry and material values, b <= a and
/// theta in [-pi/2, pi/2) to remove the ellipse's parameter symmetry, and
/// the bounding disk strictly inside the rectangle below the surface.
inline bool in_constraint_set(const PosteriorSpec& spec, const Vec7& nu)
{
  const double cx = nu[0], cy = nu[1], a = nu[2], b = nu[3], theta = nu[4];
  const double rho = nu[5], vp = nu[6];
  if (!(a > 0.0 && b > 0.0 && rho > 0.0 && vp > 0.0)) return false;
  if (!(b <= a)) return false;
  if (!(theta >= -M_PI / 2 && theta < M_PI / 2)) return false;
  const double r = a;
  return cx - r > spec.rect.xmin && cx + r < spec.rect.xmax &&
         cy - r > spec.rect.ymin && cy + r < spec.rect.ymax;
}

inline double log_prior(const PosteriorSpec& spec, const Vec7& nu)
{
  if (!in_constraint_set(spec, nu))
    return -std::numeric_limits<double>::infinity();
  const Vec7 d = nu - spec.nu0;
  return -0.5 * d.dot(spec.gamma_pr_inv() * d);
}

inline double log_likelihood(const PosteriorSpec& spec,
                             const std::vector<Eigen::MatrixXd>& predictions)
{
  if (predictions.size() != spec.datasets.size())
    throw std::invalid_argument("log_likelihood: dataset count mismatch");
  double ss = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
  {
    if (predictions[i].rows() != spec.datasets[i].data.rows() ||
        predictions[i].cols() != spec.datasets[i].data.cols())
      throw std::invalid_argument("log_likelihood: prediction shape mismatch");
    ss += (predictions[i] - spec.datasets[i].data).squaredNorm();
  }
  return -0.5 * ss / (spec.sigma_noise * spec.sigma_noise);
}

/// Stacked observation operator over all datasets of a spec.
using ObserveFn = std::function<Eigen::VectorXd(const Vec7&)>;

inline double cost_from_prediction(const PosteriorSpec& spec, const Vec7& nu,
                                   const Eigen::VectorXd& prediction)
{
  const Eigen::VectorXd residual = prediction - spec.stacked_data();
  const Vec7 d = nu - spec.nu0;
  return 0.5 * residual.squaredNorm() / (spec.sigma_noise * spec.sigma_noise) +
         0.5 * d.dot(spec.gamma_pr_inv() * d);
}

inline double cost(const PosteriorSpec& spec, const Vec7& nu,
                   const ObserveFn& observe)
{
  if (!in_constraint_set(spec, nu))
    return std::numeric_limits<double>::infinity();
  return cost_from_prediction(spec, nu, observe(nu));
}

inline double log_posterior(const PosteriorSpec& spec, const Vec7& nu,
                            const ObserveFn& observe)
{
  return -cost(spec, nu, observe);
}

struct DefaultPrior
{
  double rho_mean, vp_mean;
  double sigma_rho, sigma_vp;
  Mat7 gamma_pr;
};

/// Prior material means/deviations from the layer extremes, and the fixed
/// covariance diag(1, 1, 0.5, 0.5, 0.1, sigma_rho^2, sigma_vp^2).
inline DefaultPrior default_prior(const LayeredModel& model)
{
  model.validate();
  double rho_min = model.layers[0].rho, rho_max = rho_min;
  double vp_min = model.layers[0].vp, vp_max = vp_min;
  for (const auto& l : model.layers)
  {
    rho_min = std::min(rho_min, l.rho);
    rho_max = std::max(rho_max, l.rho);
    vp_min = std::min(vp_min, l.vp);
    vp_max = std::max(vp_max, l.vp);
  }
  DefaultPrior p;
  p.rho_mean = 0.5 * (rho_max + rho_min);
  p.vp_mean = 0.5 * (vp_max + vp_min);
  p.sigma_rho = 0.5 * (rho_max - rho_min);
  p.sigma_vp = 0.5 * (vp_max - vp_min);
  if (!(p.sigma_rho > 0.0) || !(p.sigma_vp > 0.0))
    throw ConfigError("default prior: degenerate layer spread (single material)");
  Vec7 diag;
  diag << 1.0, 1.0, 0.5, 0.5, 0.1, p.sigma_rho * p.sigma_rho,
      p.sigma_vp * p.sigma_vp;
  p.gamma_pr = diag.asDiagonal();
  return p;
}

}  // namespace wavemap

#endif
