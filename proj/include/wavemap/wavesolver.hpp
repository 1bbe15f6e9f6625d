#ifndef WAVEMAP_WAVESOLVER_HPP
#define WAVEMAP_WAVESOLVER_HPP

#include "wavemap/fem.hpp"
#include "wavemap/geometry.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <functional>
#include <stdexcept>

namespace wavemap
{

struct StabilityError : std::runtime_error
{
  int step_index;
  StabilityError(const std::string& msg, int step)
      : std::runtime_error(msg), step_index(step)
  {
  }
};

struct RickerSignal
{
  double f0 = 0.1;  // dimensionless amplitude f0 T^2 / L
  double fM = 2.0;  // dimensionless peak frequency fM T
};

inline double ricker(double t, const RickerSignal& sig)
{
  const double s = M_PI * M_PI * sig.fM * sig.fM * t * t;
  return sig.f0 * (1.0 - 2.0 * s) * std::exp(-s);
}

struct TimeGrid
{
  double dt;
  int n_steps;

  double t_final() const { return dt * n_steps; }
  void validate() const
  {
    if (!(dt > 0.0) || n_steps < 2)
      throw std::domain_error("time grid: need dt > 0 and n_steps >= 2");
  }
};

/// Largest stable time step, min over material regions of h / (2 v_p).
inline double cfl_bound(const LayeredModel& model, const InclusionParams* inc,
                        double h)
{
  double vmax = 0.0;
  for (const auto& l : model.layers) vmax = std::max(vmax, l.vp);
  if (inc != nullptr) vmax = std::max(vmax, inc->vp);
  return 0.5 * h / vmax;
}

enum class BoundaryVariant
{
  first_order,
  second_order
};

struct WaveState
{
  Eigen::VectorXd a_prev;
  Eigen::VectorXd a_curr;
};

/// Marches the explicit two-level recurrence. The mass factorization is done
/// once and reused for every step.
class WaveSolver
{
public:
  WaveSolver(const AssembledSystem& sys, double dt, BoundaryVariant variant)
      : sys_(&sys), dt_(dt), variant_(variant)
  {
    SpMat lhs = sys.B;
    if (variant == BoundaryVariant::second_order) lhs += (0.5 * dt) * sys.E;
    llt_.compute(lhs);
    if (llt_.info() != Eigen::Success)
      throw std::runtime_error("wave solver: mass factorization failed");
  }

  Eigen::VectorXd advance(const Eigen::VectorXd& a_prev,
                          const Eigen::VectorXd& a_curr, double f_n) const
  {
    Eigen::VectorXd rhs = sys_->B * (2.0 * a_curr - a_prev);
    rhs.noalias() -= (dt_ * dt_) * (sys_->C * a_curr);
    if (variant_ == BoundaryVariant::first_order)
      rhs.noalias() -= dt_ * (sys_->E * (a_curr - a_prev));
    else
      rhs.noalias() += (0.5 * dt_) * (sys_->E * a_prev);
    rhs.noalias() += (dt_ * dt_ * f_n) * sys_->h_vec;
    return llt_.solve(rhs);
  }

private:
  const AssembledSystem* sys_;
  double dt_;
  BoundaryVariant variant_;
  Eigen::SimplicialLLT<SpMat> llt_;
};

/// One recurrence step with a freshly factored system (test-scale use; full
/// solves go through WaveSolver / solve).
inline WaveState step(const AssembledSystem& sys, const WaveState& state, double dt,
                      double f_n, BoundaryVariant variant)
{
  WaveSolver solver(sys, dt, variant);
  Eigen::VectorXd next = solver.advance(state.a_prev, state.a_curr, f_n);
  if (!next.allFinite()) throw StabilityError("wave step produced non-finite values", -1);
  return {state.a_curr, std::move(next)};
}

struct SolveOptions
{
  double dt_max = 0.0;       // 0 disables the CFL refusal check
  double cfl_safety = 0.9;
  bool enforce_cfl = true;
  int monitor_stride = 50;
  double blowup_threshold = 1e6;
};

using SolveSink = std::function<void(int, const Eigen::VectorXd&)>;

/// Runs the recurrence from zero initial data, invoking `sink(n, a^n)` for
/// every time level n = 0..n_steps.
inline void solve(const AssembledSystem& sys, const TimeGrid& grid,
                  const RickerSignal& sig, BoundaryVariant variant,
                  const SolveSink& sink, const SolveOptions& opts = {})
{
  grid.validate();
  if (opts.enforce_cfl && opts.dt_max > 0.0 && grid.dt > opts.cfl_safety * opts.dt_max)
    throw StabilityError("requested dt exceeds the CFL safety bound", 0);

  WaveSolver solver(sys, grid.dt, variant);
  Eigen::VectorXd a_prev = Eigen::VectorXd::Zero(sys.dof_count);
  Eigen::VectorXd a_curr = Eigen::VectorXd::Zero(sys.dof_count);
  sink(0, a_prev);
  sink(1, a_curr);
  for (int n = 1; n < grid.n_steps; ++n)
  {
    Eigen::VectorXd next = solver.advance(a_prev, a_curr, ricker(n * grid.dt, sig));
    a_prev = std::move(a_curr);
    a_curr = std::move(next);
    const int level = n + 1;
    if (level % opts.monitor_stride == 0)
    {
      const double amax = a_curr.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(amax) || amax > opts.blowup_threshold)
        throw StabilityError("wave solution blew up", level);
    }
    sink(level, a_curr);
  }
}

/// Discrete energy: kinetic difference quotient plus the cross-term elastic
/// energy, which is conserved exactly by the undamped recurrence.
inline double discrete_energy(const AssembledSystem& sys, const Eigen::VectorXd& a_prev,
                              const Eigen::VectorXd& a_curr, double dt)
{
  const Eigen::VectorXd v = (a_curr - a_prev) / dt;
  return 0.5 * v.dot(sys.B * v) + 0.5 * a_curr.dot(sys.C * a_prev);
}

}  // namespace wavemap

#endif
