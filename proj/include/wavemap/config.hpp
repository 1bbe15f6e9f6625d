#ifndef WAVEMAP_CONFIG_HPP
#define WAVEMAP_CONFIG_HPP

#include "wavemap/bayes.hpp"
#include "wavemap/ensemble.hpp"
#include "wavemap/estimate.hpp"
#include "wavemap/geometry.hpp"
#include "wavemap/mesh.hpp"
#include "wavemap/observation.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace wavemap
{

using Json = nlohmann::json;

struct NoiseBlock
{
  double percent = 0.0;
  std::uint64_t seed = 1;
};

struct PriorBlock
{
  bool automatic = true;
  Vec7 nu0 = Vec7::Zero();
  Mat7 gamma_pr = Mat7::Identity();
  // geometry prior mean (cx, cy, a, b, theta) used with the auto material prior
  bool has_geometry = false;
  Eigen::Matrix<double, 5, 1> geometry_mean = Eigen::Matrix<double, 5, 1>::Zero();
};

/// Everything one experiment needs: the scene, the shot configurations, the
/// discretization, and the run blocks for the estimation stages.
struct ExperimentConfig
{
  std::string output_dir = "out";
  LayeredModel model;
  std::optional<InclusionParams> true_inclusion;
  std::vector<Acquisition> acquisitions;
  MeshSpec mesh;
  SolverConfig solver;
  NoiseBlock noise;
  PriorBlock prior;
  LmfConfig lmf;
  EnsembleConfig mcmc;
  int laplace_samples = 1000;
  std::uint64_t laplace_seed = 0;
  int workers = 1;

  PosteriorSpec posterior_spec(double sigma_noise) const
  {
    PosteriorSpec spec;
    if (prior.automatic)
    {
      const DefaultPrior dp = default_prior(model);
      Vec7 nu0 = Vec7::Zero();
      if (prior.has_geometry)
        nu0.head<5>() = prior.geometry_mean;
      else
      {
        // neutral default: centered at mid-depth with mid-scale axes
        nu0[0] = 0.5 * (model.rect.xmin + model.rect.xmax);
        nu0[1] = 0.5 * (model.rect.ymin + model.rect.ymax);
        nu0[2] = 0.1 * model.rect.width();
        nu0[3] = 0.05 * model.rect.width();
        nu0[4] = 0.0;
      }
      nu0[5] = dp.rho_mean;
      nu0[6] = dp.vp_mean;
      spec.nu0 = nu0;
      spec.gamma_pr = dp.gamma_pr;
    }
    else
    {
      spec.nu0 = prior.nu0;
      spec.gamma_pr = prior.gamma_pr;
    }
    spec.sigma_noise = sigma_noise;
    spec.rect = model.rect;
    return spec;
  }
};

namespace detail
{

inline Vec7 vec7_from_json(const Json& j, const char* what)
{
  if (!j.is_array() || j.size() != 7)
    throw ConfigError(std::string(what) + ": expected an array of 7 numbers");
  Vec7 v;
  for (int i = 0; i < 7; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

inline std::vector<double> coordinate_list(const Json& j, const char* what)
{
  std::vector<double> xs;
  if (j.is_array())
  {
    for (const auto& v : j) xs.push_back(v.get<double>());
  }
  else if (j.is_object())
  {
    const double start = j.at("start").get<double>();
    const double step = j.at("step").get<double>();
    const int count = j.at("count").get<int>();
    if (count < 1) throw ConfigError(std::string(what) + ": count must be >= 1");
    for (int i = 0; i < count; ++i) xs.push_back(start + step * i);
  }
  else
    throw ConfigError(std::string(what) +
                      ": expected an array or a start/step/count object");
  return xs;
}

}  // namespace detail

inline InclusionParams inclusion_from_json(const Json& j)
{
  InclusionParams inc;
  inc.cx = j.at("cx").get<double>();
  inc.cy = j.at("cy").get<double>();
  inc.a = j.at("a").get<double>();
  inc.b = j.at("b").get<double>();
  inc.theta = j.at("theta").get<double>();
  inc.rho = j.at("rho").get<double>();
  inc.vp = j.at("vp").get<double>();
  inc.validate();
  return inc;
}

/// Scene block: rectangle, interface depths, layer materials (physical units
/// are rescaled when `units` says so) and optionally the true inclusion.
inline void parse_scene(const Json& j, ExperimentConfig& cfg)
{
  if (!j.contains("scene")) throw ConfigError("config: missing scene block");
  const Json& scene = j.at("scene");

  Nondimensionalizer nd;
  bool physical = false;
  if (scene.contains("units"))
  {
    const std::string units = scene.at("units").get<std::string>();
    if (units == "physical")
      physical = true;
    else if (units != "dimensionless")
      throw ConfigError("scene.units: expected 'physical' or 'dimensionless'");
  }

  LayeredModel model;
  if (scene.contains("rect"))
  {
    const Json& r = scene.at("rect");
    if (!r.is_array() || r.size() != 4)
      throw ConfigError("scene.rect: expected [xmin, xmax, ymin, ymax]");
    model.rect = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                  r[3].get<double>()};
  }
  model.interfaces.clear();
  for (const auto& d : scene.value("interfaces", Json::array()))
    model.interfaces.push_back(d.get<double>());
  model.layers.clear();
  if (!scene.contains("layers")) throw ConfigError("scene: missing layers");
  for (const auto& l : scene.at("layers"))
  {
    double rho = l.at("rho").get<double>();
    double vp = l.at("vp").get<double>();
    if (physical) std::tie(rho, vp) = nondimensionalize(nd, rho, vp);
    model.layers.push_back({rho, vp});
  }
  model.validate();
  cfg.model = model;
  cfg.mesh.model = model;

  if (scene.contains("inclusion"))
  {
    InclusionParams inc = inclusion_from_json(scene.at("inclusion"));
    if (physical) std::tie(inc.rho, inc.vp) = nondimensionalize(nd, inc.rho, inc.vp);
    cfg.true_inclusion = inc;
    cfg.mesh.inclusion = inc;
  }
}

inline Acquisition parse_acquisition(const Json& j)
{
  Acquisition acq = default_acquisition();
  if (j.contains("receivers"))
    acq.receivers = detail::coordinate_list(j.at("receivers"), "receivers");
  if (j.contains("emitters"))
    acq.source.emitters = detail::coordinate_list(j.at("emitters"), "emitters");
  acq.source.kappa = j.value("kappa", acq.source.kappa);
  acq.record_dt = j.value("record_dt", acq.record_dt);
  acq.t_final = j.value("t_final", acq.t_final);
  acq.fM = j.value("fM", acq.fM);
  if (!(acq.record_dt > 0.0) || !(acq.t_final > 0.0) || !(acq.fM > 0.0) ||
      !(acq.source.kappa > 0.0))
    throw ConfigError("acquisition: record_dt, t_final, fM, kappa must be positive");
  if (acq.receivers.empty() || acq.source.emitters.empty())
    throw ConfigError("acquisition: receivers and emitters must be nonempty");
  return acq;
}

inline ExperimentConfig parse_config(const Json& j)
{
  ExperimentConfig cfg;
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  parse_scene(j, cfg);

  if (j.contains("acquisitions"))
    for (const auto& a : j.at("acquisitions")) cfg.acquisitions.push_back(parse_acquisition(a));
  else if (j.contains("acquisition"))
    cfg.acquisitions.push_back(parse_acquisition(j.at("acquisition")));
  else
    cfg.acquisitions.push_back(default_acquisition());

  if (j.contains("mesh"))
  {
    const Json& m = j.at("mesh");
    const std::string regime = m.value("regime", "uniform");
    if (regime == "uniform")
      cfg.mesh.regime = MeshRegime::uniform;
    else if (regime == "stratified")
      cfg.mesh.regime = MeshRegime::stratified;
    else if (regime == "adapted")
      cfg.mesh.regime = MeshRegime::adapted;
    else
      throw ConfigError("mesh.regime: expected uniform, stratified or adapted");
    cfg.mesh.h = m.value("h", cfg.mesh.h);
    if (!(cfg.mesh.h > 0.0)) throw ConfigError("mesh.h must be positive");
  }

  if (j.contains("solver"))
  {
    const Json& s = j.at("solver");
    cfg.solver.dt = s.value("dt", cfg.solver.dt);
    const std::string variant = s.value("variant", "second_order");
    if (variant == "first_order")
      cfg.solver.variant = BoundaryVariant::first_order;
    else if (variant == "second_order")
      cfg.solver.variant = BoundaryVariant::second_order;
    else
      throw ConfigError("solver.variant: expected first_order or second_order");
    cfg.solver.enforce_cfl = s.value("enforce_cfl", true);
    cfg.solver.cfl_safety = s.value("cfl_safety", 0.9);
    if (!(cfg.solver.dt > 0.0)) throw ConfigError("solver.dt must be positive");
  }

  if (j.contains("noise"))
  {
    cfg.noise.percent = j.at("noise").value("percent", 0.0);
    cfg.noise.seed = j.at("noise").value("seed", std::uint64_t{1});
    if (cfg.noise.percent < 0.0) throw ConfigError("noise.percent must be >= 0");
  }

  if (j.contains("prior"))
  {
    const Json& p = j.at("prior");
    if (p.is_string() && p.get<std::string>() == "auto")
      cfg.prior.automatic = true;
    else if (p.is_object() && p.contains("nu0"))
    {
      cfg.prior.automatic = false;
      cfg.prior.nu0 = detail::vec7_from_json(p.at("nu0"), "prior.nu0");
      const Vec7 diag = detail::vec7_from_json(p.at("diag"), "prior.diag");
      if ((diag.array() <= 0.0).any())
        throw ConfigError("prior.diag: variances must be positive");
      cfg.prior.gamma_pr = diag.asDiagonal();
    }
    else if (p.is_object() && p.contains("nu0_geometry"))
    {
      // auto material prior with an explicit geometry mean
      cfg.prior.automatic = true;
      cfg.prior.has_geometry = true;
      const Json& g = p.at("nu0_geometry");
      if (!g.is_array() || g.size() != 5)
        throw ConfigError("prior.nu0_geometry: expected [cx, cy, a, b, theta]");
      for (int i = 0; i < 5; ++i)
        cfg.prior.geometry_mean[i] = g[static_cast<std::size_t>(i)].get<double>();
    }
    else
      throw ConfigError(
          "prior: expected \"auto\", an object with nu0/diag, or nu0_geometry");
  }

  if (j.contains("lmf"))
  {
    const Json& l = j.at("lmf");
    cfg.lmf.omega0 = l.value("omega0", cfg.lmf.omega0);
    cfg.lmf.max_iters = l.value("max_iters", cfg.lmf.max_iters);
    cfg.lmf.tol_step = l.value("tol_step", cfg.lmf.tol_step);
    cfg.lmf.tol_cost = l.value("tol_cost", cfg.lmf.tol_cost);
    for (const auto& s : l.value("eta_grid", Json::array()))
      cfg.lmf.eta_grid.push_back(s.get<double>());
  }

  if (j.contains("mcmc"))
  {
    const Json& m = j.at("mcmc");
    cfg.mcmc.walkers = m.value("walkers", cfg.mcmc.walkers);
    cfg.mcmc.steps = m.value("steps", cfg.mcmc.steps);
    cfg.mcmc.burn_in = m.value("burn_in", cfg.mcmc.burn_in);
    cfg.mcmc.stretch_a = m.value("stretch_a", cfg.mcmc.stretch_a);
    cfg.mcmc.seed = m.value("seed", cfg.mcmc.seed);
  }

  if (j.contains("laplace"))
  {
    cfg.laplace_samples = j.at("laplace").value("samples", cfg.laplace_samples);
    cfg.laplace_seed = j.at("laplace").value("seed", cfg.laplace_seed);
  }

  // cross-field consistency up front, before any solve starts
  for (const auto& acq : cfg.acquisitions)
  {
    const double q = acq.record_dt / cfg.solver.dt;
    if (std::abs(q - std::lround(q)) > 1e-9)
      throw ConfigError("config: record_dt must be an integer multiple of solver.dt");
  }
  if (cfg.solver.enforce_cfl)
  {
    const InclusionParams* inc =
        cfg.true_inclusion.has_value() ? &cfg.true_inclusion.value() : nullptr;
    const double bound = cfl_bound(cfg.model, inc, cfg.mesh.h);
    if (cfg.solver.dt > cfg.solver.cfl_safety * bound)
    {
      std::ostringstream msg;
      msg << "config: dt = " << cfg.solver.dt << " violates the CFL bound "
          << cfg.solver.cfl_safety * bound << " for h = " << cfg.mesh.h;
      throw ConfigError(msg.str());
    }
  }
  return cfg;
}

/// Dotted-key override: `mesh.h=0.08` patches the raw JSON document before
/// parsing. The value is parsed as JSON when possible, else kept as string.
inline void apply_override(Json& j, const std::string& assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key=value, got: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  Json value;
  try
  {
    value = Json::parse(raw);
  }
  catch (const Json::parse_error&)
  {
    value = raw;  // plain string
  }

  Json* node = &j;
  std::size_t start = 0;
  for (;;)
  {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("--set: empty key segment in " + path);
    if (dot == std::string::npos)
    {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace wavemap

#endif
