#ifndef WAVEMAP_ESTIMATE_HPP
#define WAVEMAP_ESTIMATE_HPP

#include "wavemap/bayes.hpp"
#include "wavemap/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace wavemap
{

struct LmfConfig
{
  double omega0 = 1e-2;
  int max_iters = 40;
  double tol_step = 1e-4;
  double tol_cost = 1e-8;
  Vec7 eta = Vec7::Constant(1e-4);  // finite-difference steps per parameter
  std::vector<double> eta_grid;     // scales of the prior std, for eta_sweep
  std::optional<Vec7> start;        // iteration start; defaults to the prior mean
  int workers = 1;
};

/// eta_i = scale * (prior standard deviation of coordinate i)
inline Vec7 eta_from_prior(const PosteriorSpec& spec, double scale = 1e-2)
{
  return scale * spec.gamma_pr.diagonal().cwiseSqrt();
}

/// Forward-difference Jacobian of the stacked observation operator, with a
/// backward fallback when the perturbed point leaves the constraint set.
inline Eigen::MatrixXd fd_jacobian(const PosteriorSpec& spec, const Vec7& nu,
                                   const LmfConfig& cfg, const ObserveFn& observe,
                                   const Eigen::VectorXd& base_prediction)
{
  Eigen::MatrixXd jac(base_prediction.size(), 7);
  parallel_for(7, cfg.workers, [&](int i) {
    // near a constraint facet both one-sided steps can be infeasible at the
    // requested eta; shrink until one side fits. A step can also be feasible
    // yet unevaluable (e.g. the candidate geometry defeats the mesher), which
    // counts as infeasible here.
    for (double eta = cfg.eta[i]; eta > 1e-12; eta *= 0.5)
    {
      Vec7 fwd = nu;
      fwd[i] += eta;
      if (in_constraint_set(spec, fwd))
      {
        try
        {
          jac.col(i) = (observe(fwd) - base_prediction) / eta;
          return;
        }
        catch (const std::runtime_error&)
        {
        }
      }
      Vec7 bwd = nu;
      bwd[i] -= eta;
      if (in_constraint_set(spec, bwd))
      {
        try
        {
          jac.col(i) = (base_prediction - observe(bwd)) / eta;
          return;
        }
        catch (const std::runtime_error&)
        {
        }
      }
    }
    throw std::domain_error("fd_jacobian: no feasible one-sided step");
  });
  return jac;
}

struct GnSystem
{
  Mat7 hessian;
  Vec7 gradient;
};

inline GnSystem gn_system(const Eigen::MatrixXd& jacobian,
                          const Eigen::VectorXd& residual,
                          const PosteriorSpec& spec, const Vec7& nu)
{
  const double inv_s2 = 1.0 / (spec.sigma_noise * spec.sigma_noise);
  const Mat7 gpr_inv = spec.gamma_pr_inv();
  GnSystem out;
  out.hessian = inv_s2 * (jacobian.transpose() * jacobian) + gpr_inv;
  out.gradient =
      inv_s2 * (jacobian.transpose() * residual) + gpr_inv * (nu - spec.nu0);
  return out;
}

inline Vec7 lmf_step(const Mat7& hessian, const Vec7& gradient, double omega)
{
  Mat7 damped = hessian;
  damped.diagonal() += omega * hessian.diagonal();
  Eigen::LLT<Mat7> llt(damped);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("lmf_step: damped system not positive definite");
  return llt.solve(-gradient);
}

enum class LmfStatus
{
  converged_step,
  converged_cost,
  converged_gradient,
  max_iterations,
  stalled
};

struct LmfIterate
{
  Vec7 nu;
  double cost;
  double omega;
  bool accepted;
};

struct LmfResult
{
  Vec7 nu_map;
  double cost_map = 0.0;
  LmfStatus status = LmfStatus::max_iterations;
  std::vector<LmfIterate> trace;
};

/// Damped Gauss-Newton iteration: halve omega on accepted steps, double on
/// rejected proposals, up to 20 consecutive rejections.
inline LmfResult lmf_optimize(const PosteriorSpec& spec, const LmfConfig& cfg,
                              const ObserveFn& observe)
{
  const Vec7 nu_start = cfg.start.value_or(spec.nu0);
  if (!in_constraint_set(spec, nu_start))
    throw std::domain_error("lmf_optimize: start point violates constraints");

  LmfResult result;
  Vec7 nu = nu_start;
  Eigen::VectorXd prediction = observe(nu);
  double current_cost = cost_from_prediction(spec, nu, prediction);
  double omega = cfg.omega0;
  result.trace.push_back({nu, current_cost, omega, true});

  for (int iter = 0; iter < cfg.max_iters; ++iter)
  {
    const Eigen::VectorXd residual = prediction - spec.stacked_data();
    const Eigen::MatrixXd jac = fd_jacobian(spec, nu, cfg, observe, prediction);
    const GnSystem gn = gn_system(jac, residual, spec, nu);
    if (gn.gradient.norm() < 1e-14)
    {
      result.status = LmfStatus::converged_gradient;
      break;
    }

    bool accepted = false;
    Vec7 step = Vec7::Zero();
    for (int retry = 0; retry < 20; ++retry)
    {
      step = lmf_step(gn.hessian, gn.gradient, omega);
      // a raw step crossing the b <= a or theta-range seam still describes a
      // valid ellipse on another parameter sheet; fold it back rather than
      // rejecting it, so the iterate can cross the seam instead of stalling
      const Vec7 proposal = canonicalize_ellipse(nu + step);
      double new_cost = std::numeric_limits<double>::infinity();
      Eigen::VectorXd new_prediction;
      if (in_constraint_set(spec, proposal))
      {
        // unevaluable proposals (mesher or solver refusal) are rejected like
        // infeasible ones; damping then steers the search elsewhere
        try
        {
          new_prediction = observe(proposal);
          new_cost = cost_from_prediction(spec, proposal, new_prediction);
        }
        catch (const std::runtime_error&)
        {
          new_cost = std::numeric_limits<double>::infinity();
        }
      }
      if (new_cost < current_cost)
      {
        nu = proposal;
        prediction = std::move(new_prediction);
        current_cost = new_cost;
        omega *= 0.5;
        accepted = true;
        result.trace.push_back({nu, current_cost, omega, true});
        break;
      }
      omega *= 2.0;
      result.trace.push_back({proposal, new_cost, omega, false});
    }
    if (!accepted)
    {
      result.status = LmfStatus::stalled;
      break;
    }
    if (step.norm() < cfg.tol_step)
    {
      result.status = LmfStatus::converged_step;
      break;
    }
    if (current_cost < cfg.tol_cost)
    {
      result.status = LmfStatus::converged_cost;
      break;
    }
  }
  result.nu_map = nu;
  result.cost_map = current_cost;
  return result;
}

struct EtaSweepEntry
{
  double eta_scale;
  Vec7 nu;
  double cost;
  bool is_map;
};

/// Runs the optimizer once per eta scale; distinct terminal points flag
/// candidate secondary minima.
inline std::vector<EtaSweepEntry> eta_sweep(const PosteriorSpec& spec,
                                            const LmfConfig& cfg,
                                            const ObserveFn& observe)
{
  if (cfg.eta_grid.empty())
    throw ConfigError("eta_sweep: empty eta grid");
  std::vector<EtaSweepEntry> entries;
  for (double scale : cfg.eta_grid)
  {
    LmfConfig local = cfg;
    local.eta = eta_from_prior(spec, scale);
    const LmfResult r = lmf_optimize(spec, local, observe);
    entries.push_back({scale, r.nu_map, r.cost_map, false});
  }
  // keep the distinct terminal points (pairwise distance > 10 tol_step)
  std::vector<EtaSweepEntry> distinct;
  for (const auto& e : entries)
  {
    bool merged = false;
    for (auto& d : distinct)
      if ((d.nu - e.nu).norm() <= 10.0 * cfg.tol_step)
      {
        if (e.cost < d.cost) d = e;
        merged = true;
        break;
      }
    if (!merged) distinct.push_back(e);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < distinct.size(); ++i)
    if (distinct[i].cost < distinct[best].cost) best = i;
  distinct[best].is_map = true;
  return distinct;
}

struct LaplaceResult
{
  Vec7 map;
  Mat7 gamma_pt;
  Eigen::MatrixXd jacobian;
};

/// Gaussian posterior approximation at the MAP from the Gauss-Newton
/// Hessian inverse.
inline LaplaceResult laplace(const PosteriorSpec& spec, const Vec7& nu_map,
                             const LmfConfig& cfg, const ObserveFn& observe)
{
  if (!in_constraint_set(spec, nu_map))
    throw std::domain_error("laplace: MAP violates constraints");
  const Eigen::VectorXd prediction = observe(nu_map);
  LaplaceResult out;
  out.map = nu_map;
  out.jacobian = fd_jacobian(spec, nu_map, cfg, observe, prediction);
  const double inv_s2 = 1.0 / (spec.sigma_noise * spec.sigma_noise);
  const Mat7 h = inv_s2 * (out.jacobian.transpose() * out.jacobian) +
                 spec.gamma_pr_inv();
  out.gamma_pt = h.llt().solve(Mat7::Identity());
  return out;
}

/// nu = map + gamma_pt^{1/2} w via spectral square root, eigenvalues floored
/// at 1e-12 so near-singular covariances degrade gracefully.
inline Eigen::MatrixXd laplace_sample(const LaplaceResult& result, int n,
                                      std::uint64_t seed)
{
  if (n < 1) throw std::domain_error("laplace_sample: n must be >= 1");
  Eigen::SelfAdjointEigenSolver<Mat7> eig(result.gamma_pt);
  Vec7 vals = eig.eigenvalues().cwiseMax(1e-12);
  const Mat7 sqrt_cov =
      eig.eigenvectors() * vals.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd samples(n, 7);
  for (int i = 0; i < n; ++i)
  {
    Vec7 w;
    for (int j = 0; j < 7; ++j) w[j] = normal(rng);
    samples.row(i) = (result.map + sqrt_cov * w).transpose();
  }
  return samples;
}

}  // namespace wavemap

#endif
