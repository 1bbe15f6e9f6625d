#include "wavemap/observation.hpp"

#include "scenes.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace wavemap;
using wavemap::testing::reference_inclusion;
using wavemap::testing::reference_model;

namespace
{

SolverConfig coarse_solver()
{
  SolverConfig cfg;
  cfg.dt = 2.5e-3;
  return cfg;
}

MeshSpec coarse_mesh()
{
  return {MeshRegime::stratified, 0.12, reference_model(), std::nullopt};
}

}  // namespace

TEST_CASE("default acquisition matches the survey layout")
{
  const Acquisition acq = default_acquisition();
  CHECK(acq.source.emitters.size() == 51);
  CHECK(acq.receivers.size() == 52);
  CHECK(acq.sample_count() == 25);
  CHECK(acq.source.emitters.front() == Catch::Approx(-1.0));
  CHECK(acq.source.emitters.back() == Catch::Approx(1.0));
  CHECK(acq.receivers.front() == Catch::Approx(-1.02));
  CHECK(acq.receivers.back() == Catch::Approx(1.02));
  // receivers interleave emitters with offset -0.02
  CHECK(acq.receivers[0] - acq.source.emitters[0] == Catch::Approx(-0.02));
}

TEST_CASE("noise sigma is the RMS of the data")
{
  Eigen::MatrixXd d(1, 2);
  d << 3.0, 4.0;
  CHECK(noise_sigma(d) == Catch::Approx(std::sqrt(12.5)));
  CHECK(noise_sigma(Eigen::MatrixXd::Constant(5, 5, -2.0)) == Catch::Approx(2.0));
  CHECK(noise_sigma(Eigen::MatrixXd::Zero(3, 3)) == 0.0);
  CHECK_THROWS_AS(noise_sigma(Eigen::MatrixXd()), std::domain_error);
}

TEST_CASE("add_noise contract")
{
  DataMatrix d;
  d.acquisition = default_acquisition();
  d.values = Eigen::MatrixXd::Constant(52, 25, 1.0);

  SECTION("r = 0 is the identity")
  {
    const NoisyData out = add_noise(d, 0.0, 7);
    CHECK((out.data.values - d.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.sigma_noise == 0.0);
  }
  SECTION("noise variance is calibrated")
  {
    const NoisyData out = add_noise(d, 5.0, 7);
    const Eigen::MatrixXd diff = out.data.values - d.values;
    const double var = diff.squaredNorm() / static_cast<double>(diff.size());
    const double expected = out.sigma_noise * out.sigma_noise;
    CHECK(var == Catch::Approx(expected).epsilon(0.05));  // J*M = 1300 entries
    CHECK(out.sigma == Catch::Approx(1.0));
    CHECK(out.sigma_noise == Catch::Approx(0.05));
  }
  SECTION("seeded reproducibility")
  {
    const NoisyData a = add_noise(d, 5.0, 42);
    const NoisyData b = add_noise(d, 5.0, 42);
    const NoisyData c = add_noise(d, 5.0, 43);
    CHECK((a.data.values - b.data.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.data.values - c.data.values).cwiseAbs().maxCoeff() > 0.0);
  }
  SECTION("negative level is rejected")
  {
    CHECK_THROWS_AS(add_noise(d, -1.0, 1), std::domain_error);
  }
}

TEST_CASE("observation operator basics")
{
  const LayeredModel model = reference_model();
  const InclusionParams inc = reference_inclusion();
  Acquisition acq = default_acquisition();
  acq.t_final = 1.0;  // short runs for the unit tests

  SECTION("zero source amplitude gives zero data")
  {
    Acquisition silent = acq;
    silent.source.f0 = 0.0;
    const DataMatrix d = observe(model, inc, coarse_mesh(), silent, coarse_solver());
    CHECK(d.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(d.values.rows() == 52);
    CHECK(d.values.cols() == 10);
  }
  SECTION("host-material inclusion is indistinguishable from no inclusion")
  {
    InclusionParams ghost = inc;
    ghost.rho = 2.49;
    ghost.vp = 2.8;
    Observer obs(model, coarse_mesh(), acq, coarse_solver());
    const Eigen::MatrixXd with = obs.observe(&ghost);
    const Eigen::MatrixXd without = obs.observe(nullptr);
    CHECK((with - without).cwiseAbs().maxCoeff() < 1e-13);
  }
  SECTION("determinism")
  {
    Observer obs(model, coarse_mesh(), acq, coarse_solver());
    const Eigen::MatrixXd a = obs.observe(&inc);
    const Eigen::MatrixXd b = obs.observe(&inc);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("finite propagation speed at distant receivers")
{
  LayeredModel model = reference_model();
  Acquisition acq;
  acq.source.emitters = {-1.0};  // single emitter at the far left
  acq.source.kappa = 0.04;
  acq.receivers = {1.4};
  acq.record_dt = 0.05;
  acq.t_final = 1.5;
  SolverConfig cfg;
  cfg.dt = 2.5e-3;
  MeshSpec spec{MeshRegime::stratified, 0.06, model, std::nullopt};
  const InclusionParams inc = reference_inclusion();
  const DataMatrix d = observe(model, inc, spec, acq, cfg);

  // distance 2.4, fastest speed 4.4: nothing arrives before ~0.54; the
  // source Gaussian has width sqrt(kappa) = 0.2, so allow for its support
  double vmax = 4.4;
  for (int m = 0; m < d.values.cols(); ++m)
  {
    const double t = (m + 1) * acq.record_dt;
    if (t < (2.4 - 3.0 * std::sqrt(acq.source.kappa)) / vmax - 0.05)
      CHECK(std::abs(d.values(0, m)) < 1e-8);
  }
  CHECK(d.values.cwiseAbs().maxCoeff() > 1e-8);  // something does arrive
}

TEST_CASE("observation error paths")
{
  const LayeredModel model = reference_model();
  Acquisition acq = default_acquisition();

  SECTION("record_dt must be a multiple of dt")
  {
    SolverConfig cfg;
    cfg.dt = 3e-3;  // 0.1 / 3e-3 is not an integer
    CHECK_THROWS_AS(Observer(model, coarse_mesh(), acq, cfg), ConfigError);
  }
  SECTION("receiver outside the mesh")
  {
    Acquisition bad = acq;
    bad.receivers = {2.5};
    CHECK_THROWS_AS(Observer(model, coarse_mesh(), bad, coarse_solver()), ConfigError);
  }
}

TEST_CASE("data CSV round-trip")
{
  DataMatrix d;
  d.acquisition = default_acquisition();
  d.values.resize(52, 25);
  for (int j = 0; j < 52; ++j)
    for (int m = 0; m < 25; ++m) d.values(j, m) = std::sin(0.1 * j + 0.7 * m);
  std::stringstream ss;
  write_data_csv(ss, d);
  const DataMatrix back = read_data_csv(ss, d.acquisition);
  REQUIRE(back.values.rows() == d.values.rows());
  REQUIRE(back.values.cols() == d.values.cols());
  CHECK((back.values - d.values).cwiseAbs().maxCoeff() == 0.0);

  std::stringstream empty("x,0.1\n");
  CHECK_THROWS_AS(read_data_csv(empty, d.acquisition), ConfigError);
}
