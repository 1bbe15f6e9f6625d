#include "wavemap/ensemble.hpp"

#include "scenes.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

using namespace wavemap;
using wavemap::testing::reference_prior_cov;
using wavemap::testing::reference_prior_mean;

namespace
{

LogDensityFn standard_gaussian()
{
  return [](const Vec7& nu) { return -0.5 * nu.squaredNorm(); };
}

EnsembleState spread_state(int walkers, std::uint64_t seed, double scale = 1.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  EnsembleState st;
  st.walkers.resize(walkers, 7);
  st.log_post.resize(walkers);
  for (int w = 0; w < walkers; ++w)
  {
    for (int i = 0; i < 7; ++i) st.walkers(w, i) = normal(rng);
    st.log_post[w] = -0.5 * st.walkers.row(w).squaredNorm();
  }
  return st;
}

}  // namespace

TEST_CASE("stretch draw")
{
  const double a = 2.0;
  CHECK(draw_stretch(a, 0.0) == Catch::Approx(0.5));
  CHECK(draw_stretch(a, 1.0) == Catch::Approx(2.0));
  CHECK(draw_stretch(a, 0.5) == Catch::Approx(1.125));

  SECTION("distribution matches the inverse-square-root density")
  {
    // CDF of z on [1/a, a]: (sqrt(z) - 1/sqrt(a)) / (sqrt(a) - 1/sqrt(a))
    const int n = 100000;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> zs(n);
    for (double& z : zs) z = draw_stretch(a, unit(rng));
    std::sort(zs.begin(), zs.end());
    const double sa = std::sqrt(a);
    double ks = 0.0;
    for (int i = 0; i < n; ++i)
    {
      const double cdf = (std::sqrt(zs[static_cast<std::size_t>(i)]) - 1.0 / sa) /
                         (sa - 1.0 / sa);
      ks = std::max(ks, std::abs(cdf - (i + 0.5) / n));
    }
    CHECK(ks < 0.01);
    CHECK(zs.front() >= 1.0 / a);
    CHECK(zs.back() <= a);
  }
}

TEST_CASE("derangement partners")
{
  std::mt19937_64 rng(3);
  SECTION("two walkers always swap")
  {
    for (int trial = 0; trial < 20; ++trial)
    {
      const auto p = derangement(2, rng);
      CHECK(p[0] == 1);
      CHECK(p[1] == 0);
    }
  }
  SECTION("no fixed points, uniform over the derangements of three")
  {
    int first = 0;
    const int n = 10000;
    for (int trial = 0; trial < n; ++trial)
    {
      const auto p = derangement(3, rng);
      for (int i = 0; i < 3; ++i) CHECK(p[static_cast<std::size_t>(i)] != i);
      if (p[0] == 1) ++first;  // (1,2,0) vs (2,0,1)
    }
    CHECK(std::abs(first / static_cast<double>(n) - 0.5) < 0.02);
  }
  SECTION("degenerate sizes") { CHECK_THROWS_AS(derangement(1, rng), std::domain_error); }
}

TEST_CASE("configuration validation")
{
  EnsembleConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.effective_burn_in() == cfg.steps / 5);

  SECTION("too few walkers")
  {
    cfg.walkers = 14;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("stretch parameter must exceed one")
  {
    cfg.stretch_a = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("burn-in must leave samples")
  {
    cfg.burn_in = cfg.steps;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("collapsed initial ensemble is refused")
{
  EnsembleConfig cfg;
  cfg.walkers = 16;
  cfg.steps = 10;
  cfg.burn_in = 0;
  EnsembleState st;
  st.walkers = Eigen::MatrixXd::Ones(16, 7);
  st.log_post = Eigen::VectorXd::Zero(16);
  CHECK_THROWS_AS(run_ensemble_from(cfg, standard_gaussian(), st), SamplerError);
}

TEST_CASE("sampler reproduces a standard gaussian")
{
  EnsembleConfig cfg;
  cfg.walkers = 32;
  cfg.steps = 5000;
  cfg.burn_in = 1000;
  cfg.seed = 17;
  const EnsembleRun run =
      run_ensemble_from(cfg, standard_gaussian(), spread_state(32, 99));

  const Eigen::MatrixXd s = run.chains.post_burn_in();
  REQUIRE(s.rows() == static_cast<Eigen::Index>(32) * 4000);
  const Eigen::VectorXd mean = s.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 0.05);
  const Eigen::MatrixXd centered = s.rowwise() - mean.transpose();
  const Eigen::VectorXd var =
      centered.colwise().squaredNorm() / static_cast<double>(s.rows() - 1);
  for (int i = 0; i < 7; ++i) CHECK(var[i] == Catch::Approx(1.0).epsilon(0.10));

  CHECK(run.chains.acceptance_rate() > 0.1);
  CHECK(run.chains.acceptance_rate() < 0.9);
  CHECK(run.chains.failed_evaluations == 0);
  CHECK(run.log_post_map <= 0.0);
  CHECK(run.log_post_map > -1.0);  // the mode at zero is visited closely
  CHECK(integrated_autocorrelation(run.chains, 0) >= 1.0);
}

TEST_CASE("sampling the truncated prior recovers its moments")
{
  PosteriorSpec spec;
  spec.nu0 = reference_prior_mean();
  // tight covariance keeps the constraint truncation mild
  spec.gamma_pr = 0.0025 * reference_prior_cov();
  spec.sigma_noise = 1.0;
  spec.rect = {-1.5, 1.5, -3.0, 0.0};
  const LogDensityFn target = [spec](const Vec7& nu) { return log_prior(spec, nu); };

  EnsembleConfig cfg;
  cfg.walkers = 32;
  cfg.steps = 4000;
  cfg.burn_in = 800;
  cfg.seed = 5;
  const EnsembleRun run = run_ensemble(spec, cfg, target);

  const Eigen::MatrixXd s = run.chains.post_burn_in();
  const Eigen::VectorXd mean = s.colwise().mean();
  const Eigen::MatrixXd centered = s.rowwise() - mean.transpose();
  const Eigen::VectorXd var =
      centered.colwise().squaredNorm() / static_cast<double>(s.rows() - 1);
  const Vec7 sigma = spec.gamma_pr.diagonal().cwiseSqrt();
  for (int i = 0; i < 7; ++i)
  {
    CHECK(std::abs(mean[i] - spec.nu0[i]) < 0.12 * sigma[i]);
    CHECK(var[i] == Catch::Approx(spec.gamma_pr(i, i)).epsilon(0.15));
  }
}

TEST_CASE("seeded determinism")
{
  EnsembleConfig cfg;
  cfg.walkers = 16;
  cfg.steps = 200;
  cfg.burn_in = 0;
  cfg.seed = 123;
  const EnsembleRun a = run_ensemble_from(cfg, standard_gaussian(), spread_state(16, 4));
  const EnsembleRun b = run_ensemble_from(cfg, standard_gaussian(), spread_state(16, 4));
  CHECK((a.chains.samples - b.chains.samples).cwiseAbs().maxCoeff() == 0.0);

  cfg.seed = 124;
  const EnsembleRun c = run_ensemble_from(cfg, standard_gaussian(), spread_state(16, 4));
  CHECK((a.chains.samples - c.chains.samples).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("affine invariance of the stretch move")
{
  // exact power-of-two scaling and exactly representable shifts keep the two
  // runs bitwise comparable
  Vec7 scale, shift;
  scale << 2.0, 0.5, 4.0, 0.25, 8.0, 0.125, 16.0;
  shift << 1.0, -2.0, 0.5, -0.25, 4.0, -8.0, 0.0625;

  const LogDensityFn g = standard_gaussian();
  const LogDensityFn g_mapped = [g, scale, shift](const Vec7& y) {
    return g(scale.cwiseProduct(y) + shift);
  };

  EnsembleConfig cfg;
  cfg.walkers = 16;
  cfg.steps = 300;
  cfg.burn_in = 0;
  cfg.seed = 77;

  const EnsembleState st1 = spread_state(16, 21);
  EnsembleState st2 = st1;
  for (int w = 0; w < 16; ++w)
    st2.walkers.row(w) =
        (st1.walkers.row(w).transpose() - shift).cwiseQuotient(scale).transpose();

  const EnsembleRun r1 = run_ensemble_from(cfg, g, st1);
  const EnsembleRun r2 = run_ensemble_from(cfg, g_mapped, st2);

  Eigen::MatrixXd mapped_back = r2.chains.samples;
  for (Eigen::Index r = 0; r < mapped_back.rows(); ++r)
    mapped_back.row(r) =
        (scale.cwiseProduct(mapped_back.row(r).transpose()) + shift).transpose();
  // x - shift rounds, so the two chains drift apart at machine precision;
  // any flipped accept decision would instead show up as an O(1) gap
  CHECK((mapped_back - r1.chains.samples).cwiseAbs().maxCoeff() < 1e-9);
  for (int w = 0; w < 16; ++w)
    CHECK(r1.chains.acceptance_count[static_cast<std::size_t>(w)] ==
          r2.chains.acceptance_count[static_cast<std::size_t>(w)]);
}

TEST_CASE("an impossible target trips the rejection monitor")
{
  EnsembleConfig cfg;
  cfg.walkers = 16;
  cfg.steps = 500;
  cfg.burn_in = 0;
  EnsembleState st = spread_state(16, 8);
  st.log_post.setZero();  // pretend the start was fine
  const LogDensityFn wall = [](const Vec7&) {
    return -std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(run_ensemble_from(cfg, wall, st), SamplerError);
}

TEST_CASE("forward-model failures are counted and scored as rejections")
{
  EnsembleConfig cfg;
  cfg.walkers = 16;
  const EnsembleState st = spread_state(16, 12);
  const LogDensityFn thrower = [](const Vec7&) -> double {
    throw std::runtime_error("forward model exploded");
  };
  std::vector<long> acc(16, 0);
  std::atomic<long> failures{0};
  const EnsembleState next = step_ensemble(st, cfg, thrower, 0, &acc, &failures);
  CHECK(failures.load() == 16);
  for (long a : acc) CHECK(a == 0);
  CHECK((next.walkers - st.walkers).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("posterior summaries")
{
  // hand-built chain: every sample is the same ellipse
  ChainStore chains;
  chains.walkers = 2;
  chains.steps = 3;
  chains.burn_in = 1;
  chains.samples.resize(6, 7);
  Vec7 nu;
  nu << 0.0, -1.0, 0.5, 0.25, 0.0, 2.0, 3.0;
  for (int r = 0; r < 6; ++r) chains.samples.row(r) = nu.transpose();
  chains.log_post = Eigen::MatrixXd::Zero(3, 2);

  SECTION("membership contour of a deterministic chain is an indicator")
  {
    const ContourGrid grid =
        membership_contour(chains, {-1.5, 1.5, -3.0, 0.0}, 30, 30);
    bool all_binary = true;
    for (int iy = 0; iy < 30; ++iy)
      for (int ix = 0; ix < 30; ++ix)
      {
        const double p = grid.probability(iy, ix);
        if (p != 0.0 && p != 1.0) all_binary = false;
      }
    CHECK(all_binary);
    // the cell containing the ellipse center reports certain membership
    const int ix = static_cast<int>((nu[0] + 1.5) / 3.0 * 30);
    const int iy = static_cast<int>((0.0 - nu[1]) / 3.0 * 30);
    CHECK(grid.probability(iy, ix) == 1.0);
    CHECK(grid.probability(0, 0) == 0.0);
  }
  SECTION("histograms integrate to one")
  {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 7; ++c) chains.samples(r, c) = normal(rng);
    const auto hs = histograms(chains, {0, 1, 5}, 16);
    REQUIRE(hs.size() == 3);
    for (const auto& h : hs)
      CHECK(h.density.sum() * h.bin_width() == Catch::Approx(1.0).epsilon(1e-9));

    const Histogram2D h2 =
        histogram2d(chains.samples.col(5), chains.samples.col(6), 8);
    const double cell = (h2.xhi - h2.xlo) / 8 * (h2.yhi - h2.ylo) / 8;
    CHECK(h2.density.sum() * cell == Catch::Approx(1.0).epsilon(1e-9));
  }
}
