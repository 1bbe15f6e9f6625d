#ifndef WAVEMAP_ENSEMBLE_HPP
#define WAVEMAP_ENSEMBLE_HPP

#include "wavemap/bayes.hpp"
#include "wavemap/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace wavemap
{

struct SamplerError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct EnsembleConfig
{
  int walkers = 32;
  int steps = 1000;
  int burn_in = -1;  // negative: steps / 5
  double stretch_a = 2.0;
  std::uint64_t seed = 0;
  int workers = 1;

  int effective_burn_in() const { return burn_in < 0 ? steps / 5 : burn_in; }

  void validate() const
  {
    if (walkers <= 14)
      throw ConfigError("ensemble: walker count must exceed 2 x 7 parameters");
    if (!(stretch_a > 1.0)) throw ConfigError("ensemble: stretch parameter a must be > 1");
    if (effective_burn_in() >= steps)
      throw ConfigError("ensemble: burn-in must be smaller than the step count");
  }
};

/// Inverse-CDF draw from the stretch density s^{-1/2} on [1/a, a].
inline double draw_stretch(double a, double u)
{
  const double sa = std::sqrt(a);
  const double z = u * (sa - 1.0 / sa) + 1.0 / sa;
  return z * z;
}

/// Uniform random derangement by rejection.
template <typename Rng>
std::vector<int> derangement(int n, Rng& rng)
{
  if (n < 2) throw std::domain_error("derangement: need n >= 2");
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (;;)
  {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    bool ok = true;
    for (int i = 0; i < n; ++i)
      if (perm[static_cast<std::size_t>(i)] == i)
      {
        ok = false;
        break;
      }
    if (ok) return perm;
  }
}

using LogDensityFn = std::function<double(const Vec7&)>;

struct EnsembleState
{
  Eigen::MatrixXd walkers;   // W x 7
  Eigen::VectorXd log_post;  // W
};

struct ChainStore
{
  int walkers = 0;
  int steps = 0;
  int burn_in = 0;
  Eigen::MatrixXd samples;   // (steps * walkers) x 7, ordered by (step, walker)
  Eigen::MatrixXd log_post;  // steps x walkers
  std::vector<long> acceptance_count;  // per walker
  long failed_evaluations = 0;         // forward-model failures scored -inf

  Eigen::Index row(int step, int walker) const
  {
    return static_cast<Eigen::Index>(step) * walkers + walker;
  }

  double acceptance_rate() const
  {
    const double total = static_cast<double>(steps) * walkers;
    long acc = 0;
    for (long c : acceptance_count) acc += c;
    return total > 0 ? acc / total : 0.0;
  }

  /// Rows of `samples` past burn-in.
  Eigen::MatrixXd post_burn_in() const
  {
    const Eigen::Index first = row(burn_in, 0);
    return samples.bottomRows(samples.rows() - first);
  }
};

namespace detail
{

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t step,
                                 std::uint64_t walker)
{
  return splitmix64(splitmix64(seed ^ 0x5eedULL) + step * 0x9e3779b97f4a7c15ULL +
                    walker);
}

inline double min_pairwise_spread(const Eigen::MatrixXd& walkers)
{
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < walkers.rows(); ++i)
    for (Eigen::Index j = i + 1; j < walkers.rows(); ++j)
      best = std::min(best, (walkers.row(i) - walkers.row(j)).norm());
  return best;
}

}  // namespace detail

/// One synchronous stretch-move sweep. All proposals read the step-k
/// snapshot, so walker evaluations run in parallel; the random stream is
/// split per walker per step and the result does not depend on scheduling.
inline EnsembleState step_ensemble(const EnsembleState& state,
                                   const EnsembleConfig& cfg,
                                   const LogDensityFn& log_density, int step_index,
                                   std::vector<long>* acceptance_count = nullptr,
                                   std::atomic<long>* failures = nullptr)
{
  const int W = static_cast<int>(state.walkers.rows());
  std::mt19937_64 perm_rng(detail::stream_seed(cfg.seed, step_index, ~0ULL));
  const std::vector<int> partner = derangement(W, perm_rng);

  EnsembleState next = state;
  constexpr int P = 7;
  parallel_for(W, cfg.workers, [&](int w) {
    std::mt19937_64 rng(detail::stream_seed(cfg.seed, step_index, w));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double z = draw_stretch(cfg.stretch_a, unit(rng));
    const double accept_u = unit(rng);

    const Vec7 cur = state.walkers.row(w).transpose();
    const Vec7 ref = state.walkers.row(partner[static_cast<std::size_t>(w)]).transpose();
    const Vec7 proposal = ref + z * (cur - ref);

    double lp = -std::numeric_limits<double>::infinity();
    try
    {
      lp = log_density(proposal);
    }
    catch (const std::exception&)
    {
      if (failures != nullptr) failures->fetch_add(1);
    }
    const double log_alpha = (P - 1) * std::log(z) + lp - state.log_post[w];
    if (std::isfinite(lp) && std::log(accept_u) < log_alpha)
    {
      next.walkers.row(w) = proposal.transpose();
      next.log_post[w] = lp;
      if (acceptance_count != nullptr) ++(*acceptance_count)[static_cast<std::size_t>(w)];
    }
  });
  return next;
}

struct EnsembleRun
{
  ChainStore chains;
  Vec7 nu_map;
  double log_post_map = 0.0;
};

/// Full sampler run from a caller-supplied initial ensemble.
inline EnsembleRun run_ensemble_from(const EnsembleConfig& cfg,
                                     const LogDensityFn& log_density,
                                     EnsembleState state)
{
  cfg.validate();
  const int W = cfg.walkers;
  if (state.walkers.rows() != W)
    throw ConfigError("ensemble: initial state size mismatch");
  if (detail::min_pairwise_spread(state.walkers) <= 1e-12)
    throw SamplerError("ensemble: initial walkers are collapsed");

  EnsembleRun out;
  ChainStore& store = out.chains;
  store.walkers = W;
  store.steps = cfg.steps;
  store.burn_in = cfg.effective_burn_in();
  store.samples.resize(static_cast<Eigen::Index>(cfg.steps) * W, 7);
  store.log_post.resize(cfg.steps, W);
  store.acceptance_count.assign(static_cast<std::size_t>(W), 0);
  std::atomic<long> failures{0};

  long window_accepts = 0;
  for (int k = 0; k < cfg.steps; ++k)
  {
    std::vector<long> before = store.acceptance_count;
    state = step_ensemble(state, cfg, log_density, k, &store.acceptance_count,
                          &failures);
    for (int w = 0; w < W; ++w)
    {
      store.samples.row(store.row(k, w)) = state.walkers.row(w);
      store.log_post(k, w) = state.log_post[w];
      window_accepts += store.acceptance_count[static_cast<std::size_t>(w)] -
                        before[static_cast<std::size_t>(w)];
    }
    if ((k + 1) % 100 == 0)
    {
      if (window_accepts < static_cast<long>(0.01 * 100.0 * W))
        throw SamplerError("ensemble: >99% rejections over a 100-step window");
      window_accepts = 0;
      if (detail::min_pairwise_spread(state.walkers) <= 1e-12)
        throw SamplerError("ensemble: walker ensemble collapsed");
    }
  }
  store.failed_evaluations = failures.load();

  // MAP: highest stored posterior past burn-in
  double best = -std::numeric_limits<double>::infinity();
  for (int k = store.burn_in; k < cfg.steps; ++k)
    for (int w = 0; w < W; ++w)
      if (store.log_post(k, w) > best)
      {
        best = store.log_post(k, w);
        out.nu_map = store.samples.row(store.row(k, w)).transpose();
      }
  out.log_post_map = best;
  return out;
}

/// Draws the initial ensemble from the truncated prior by rejection.
inline EnsembleState init_from_prior(const PosteriorSpec& spec,
                                     const EnsembleConfig& cfg,
                                     const LogDensityFn& log_density)
{
  Eigen::SelfAdjointEigenSolver<Mat7> eig(spec.gamma_pr);
  const Mat7 sqrt_pr = eig.eigenvectors() *
                       eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                       eig.eigenvectors().transpose();
  EnsembleState state;
  state.walkers.resize(cfg.walkers, 7);
  state.log_post.resize(cfg.walkers);
  for (int w = 0; w < cfg.walkers; ++w)
  {
    std::mt19937_64 rng(detail::stream_seed(cfg.seed, 0xB00ULL, w));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 0;; ++attempt)
    {
      if (attempt > 10000)
        throw SamplerError("ensemble: cannot draw initial walkers inside the "
                           "constraint set");
      Vec7 z;
      for (int i = 0; i < 7; ++i) z[i] = normal(rng);
      const Vec7 nu = spec.nu0 + sqrt_pr * z;
      if (!in_constraint_set(spec, nu)) continue;
      const double lp = log_density(nu);
      if (!std::isfinite(lp)) continue;
      state.walkers.row(w) = nu.transpose();
      state.log_post[w] = lp;
      break;
    }
  }
  return state;
}

inline EnsembleRun run_ensemble(const PosteriorSpec& spec, const EnsembleConfig& cfg,
                                const LogDensityFn& log_density)
{
  cfg.validate();
  return run_ensemble_from(cfg, log_density, init_from_prior(spec, cfg, log_density));
}

// --- posterior summaries -------------------------------------------------

struct ContourGrid
{
  Rect rect;
  int nx = 0, ny = 0;
  Eigen::MatrixXd probability;  // ny x nx, row 0 at rect.ymax
};

/// Fraction of post-burn-in samples whose ellipse contains each cell center.
inline ContourGrid membership_contour(const ChainStore& chains, Rect rect, int nx,
                                      int ny)
{
  const Eigen::MatrixXd samples = chains.post_burn_in();
  if (samples.rows() == 0)
    throw SamplerError("membership_contour: no post-burn-in samples");
  ContourGrid grid{rect, nx, ny, Eigen::MatrixXd::Zero(ny, nx)};
  for (int iy = 0; iy < ny; ++iy)
  {
    const double y = rect.ymax - (iy + 0.5) * rect.height() / ny;
    for (int ix = 0; ix < nx; ++ix)
    {
      const double x = rect.xmin + (ix + 0.5) * rect.width() / nx;
      long inside = 0;
      for (Eigen::Index s = 0; s < samples.rows(); ++s)
      {
        const InclusionParams inc = InclusionParams::from_vector(samples.row(s));
        if (inside_ellipse(inc, {x, y})) ++inside;
      }
      grid.probability(iy, ix) =
          static_cast<double>(inside) / static_cast<double>(samples.rows());
    }
  }
  return grid;
}

struct Histogram1D
{
  double lo = 0.0, hi = 1.0;
  Eigen::VectorXd density;  // pdf-normalized

  double bin_width() const { return (hi - lo) / density.size(); }
};

inline Histogram1D histogram(const Eigen::VectorXd& values, int bins)
{
  Histogram1D h;
  h.lo = values.minCoeff();
  h.hi = values.maxCoeff();
  if (h.hi <= h.lo) h.hi = h.lo + 1e-12;
  h.density = Eigen::VectorXd::Zero(bins);
  const double w = (h.hi - h.lo) / bins;
  for (Eigen::Index i = 0; i < values.size(); ++i)
  {
    int b = static_cast<int>((values[i] - h.lo) / w);
    b = std::clamp(b, 0, bins - 1);
    h.density[b] += 1.0;
  }
  h.density /= static_cast<double>(values.size()) * w;
  return h;
}

struct Histogram2D
{
  double xlo, xhi, ylo, yhi;
  Eigen::MatrixXd density;  // pdf-normalized, (ybins x xbins)
};

inline Histogram2D histogram2d(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys,
                               int bins)
{
  Histogram2D h;
  h.xlo = xs.minCoeff();
  h.xhi = std::max(xs.maxCoeff(), h.xlo + 1e-12);
  h.ylo = ys.minCoeff();
  h.yhi = std::max(ys.maxCoeff(), h.ylo + 1e-12);
  h.density = Eigen::MatrixXd::Zero(bins, bins);
  const double wx = (h.xhi - h.xlo) / bins;
  const double wy = (h.yhi - h.ylo) / bins;
  for (Eigen::Index i = 0; i < xs.size(); ++i)
  {
    int bx = std::clamp(static_cast<int>((xs[i] - h.xlo) / wx), 0, bins - 1);
    int by = std::clamp(static_cast<int>((ys[i] - h.ylo) / wy), 0, bins - 1);
    h.density(by, bx) += 1.0;
  }
  h.density /= static_cast<double>(xs.size()) * wx * wy;
  return h;
}

/// Per-field histograms over post-burn-in samples.
inline std::vector<Histogram1D> histograms(const ChainStore& chains,
                                           const std::vector<int>& fields,
                                           int bins = 64)
{
  const Eigen::MatrixXd samples = chains.post_burn_in();
  if (samples.rows() == 0) throw SamplerError("histograms: no post-burn-in samples");
  std::vector<Histogram1D> out;
  for (int f : fields) out.push_back(histogram(samples.col(f), bins));
  return out;
}

/// Windowed integrated autocorrelation time of the ensemble-mean chain of
/// one coordinate (reporting only).
inline double integrated_autocorrelation(const ChainStore& chains, int field)
{
  const int n = chains.steps - chains.burn_in;
  if (n < 4) return 1.0;
  Eigen::VectorXd mean_chain(n);
  for (int k = 0; k < n; ++k)
  {
    double m = 0.0;
    for (int w = 0; w < chains.walkers; ++w)
      m += chains.samples(chains.row(chains.burn_in + k, w), field);
    mean_chain[k] = m / chains.walkers;
  }
  const double mu = mean_chain.mean();
  Eigen::VectorXd centered = mean_chain.array() - mu;
  const double var = centered.squaredNorm() / n;
  if (var <= 0.0) return 1.0;
  double tau = 1.0;
  for (int lag = 1; lag < n / 2; ++lag)
  {
    double c = 0.0;
    for (int k = 0; k + lag < n; ++k) c += centered[k] * centered[k + lag];
    c /= (n - lag) * var;
    if (c < 0.05) break;  // window cutoff
    tau += 2.0 * c;
  }
  return tau;
}

}  // namespace wavemap

#endif
