// Command-line driver: mesh generation, forward solves, synthetic data,
// MAP inversion, Laplace UQ, ensemble sampling and report emission, all
// driven by one JSON experiment configuration.

#include "wavemap/config.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace wavemap;

namespace
{

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitMesh = 2;
constexpr int kExitStall = 3;
constexpr int kExitSampler = 4;

struct CliOptions
{
  std::string config_path;
  std::vector<std::string> overrides;
  int workers = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool self_test = false;
};

ExperimentConfig load(const CliOptions& opts, Json* raw_out = nullptr)
{
  Json raw;
  if (!opts.config_path.empty())
  {
    std::ifstream in(opts.config_path);
    if (!in) throw ConfigError("cannot open config file: " + opts.config_path);
    in >> raw;
  }
  else
    raw = Json::object();
  for (const auto& o : opts.overrides) apply_override(raw, o);
  if (raw_out != nullptr) *raw_out = raw;
  ExperimentConfig cfg = parse_config(raw);
  cfg.workers = opts.workers > 0
                    ? opts.workers
                    : std::max(1u, std::thread::hardware_concurrency());
  cfg.lmf.workers = cfg.workers;
  cfg.mcmc.workers = cfg.workers;
  if (opts.seed_set)
  {
    cfg.noise.seed = opts.seed;
    cfg.mcmc.seed = opts.seed;
    cfg.laplace_seed = opts.seed;
  }
  return cfg;
}

void ensure_layout(const ExperimentConfig& cfg)
{
  for (const char* sub : {"data", "mesh", "opt", "mcmc"})
    fs::create_directories(fs::path(cfg.output_dir) / sub);
}

std::string frequency_tag(double fM)
{
  std::ostringstream os;
  os << "fM" << fM;
  std::string s = os.str();
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

void merge_manifest(const ExperimentConfig& cfg, const std::string& section,
                    const Json& entry)
{
  const fs::path path = fs::path(cfg.output_dir) / "manifest.json";
  Json manifest = Json::object();
  if (fs::exists(path))
  {
    std::ifstream in(path);
    in >> manifest;
  }
  manifest[section] = entry;
  std::ofstream out(path);
  out << manifest.dump(2) << "\n";
}

Json vec7_json(const Vec7& v)
{
  Json j = Json::array();
  for (int i = 0; i < 7; ++i) j.push_back(v[i]);
  return j;
}

// --- mesh ----------------------------------------------------------------

int cmd_mesh(const CliOptions& opts)
{
  const ExperimentConfig cfg = load(opts);
  ensure_layout(cfg);
  Mesh mesh;
  try
  {
    mesh = generate_mesh(cfg.mesh);
  }
  catch (const ConfigError& e)
  {
    std::cerr << "mesh error: " << e.what() << "\n";
    return kExitMesh;
  }
  catch (const MeshingError& e)
  {
    std::cerr << "mesh error: " << e.what() << "\n";
    return kExitMesh;
  }

  const fs::path mesh_path = fs::path(cfg.output_dir) / "mesh" / "mesh.txt";
  {
    std::ofstream out(mesh_path);
    write_mesh(out, mesh);
  }

  double qmin = 1.0, qsum = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t)
  {
    const double q = mesh.triangle_quality(t);
    qmin = std::min(qmin, q);
    qsum += q;
  }
  const TopologyReport topo = topology_audit(mesh);

  bool conforming = true;
  if (cfg.mesh.regime == MeshRegime::adapted)
  {
    const InclusionParams* inc =
        cfg.true_inclusion.has_value() ? &cfg.true_inclusion.value() : nullptr;
    const auto regions = scene_signed_distances(cfg.model, inc);
    conforming = conformity_check(mesh, regions, 1e-6 * cfg.mesh.h).ok;
  }

  Json report;
  report["points"] = mesh.point_count();
  report["triangles"] = mesh.triangle_count();
  report["min_quality"] = qmin;
  report["mean_quality"] = mesh.triangle_count() > 0 ? qsum / mesh.triangle_count() : 0.0;
  report["topology_ok"] = topo.ok;
  report["conforming"] = conforming;
  report["file"] = mesh_path.string();
  merge_manifest(cfg, "mesh", report);
  std::cout << report.dump(2) << "\n";
  if (!conforming || !topo.ok)
  {
    std::cerr << "mesh error: conformity or topology check failed\n";
    return kExitMesh;
  }
  return kExitOk;
}

// --- forward / generate ---------------------------------------------------

int cmd_forward(const CliOptions& opts, bool with_noise)
{
  const ExperimentConfig cfg = load(opts);
  if (!cfg.true_inclusion.has_value())
    throw ConfigError("forward solve requires scene.inclusion");
  ensure_layout(cfg);

  Json entry;
  entry["mesh_regime"] = cfg.mesh.regime == MeshRegime::uniform     ? "uniform"
                         : cfg.mesh.regime == MeshRegime::stratified ? "stratified"
                                                                     : "adapted";
  Json files = Json::array();
  for (const auto& acq : cfg.acquisitions)
  {
    const DataMatrix clean =
        observe(cfg.model, *cfg.true_inclusion, cfg.mesh, acq, cfg.solver);
    const std::string tag = frequency_tag(acq.fM);
    if (!with_noise)
    {
      const fs::path p = fs::path(cfg.output_dir) / "data" / ("forward_" + tag + ".csv");
      std::ofstream out(p);
      write_data_csv(out, clean);
      files.push_back(p.string());
      continue;
    }
    const NoisyData noisy = add_noise(clean, cfg.noise.percent, cfg.noise.seed);
    const fs::path p = fs::path(cfg.output_dir) / "data" / ("data_" + tag + ".csv");
    {
      std::ofstream out(p);
      write_data_csv(out, noisy.data);
    }
    Json sidecar;
    sidecar["sigma"] = noisy.sigma;
    sidecar["sigma_noise"] = noisy.sigma_noise;
    sidecar["noise_percent"] = noisy.noise_percent;
    sidecar["seed"] = noisy.seed;
    sidecar["fM"] = acq.fM;
    const fs::path sp = fs::path(cfg.output_dir) / "data" / ("noise_" + tag + ".json");
    {
      std::ofstream out(sp);
      out << sidecar.dump(2) << "\n";
    }
    files.push_back(p.string());
  }
  entry["files"] = files;
  merge_manifest(cfg, with_noise ? "generate" : "forward", entry);
  std::cout << entry.dump(2) << "\n";
  return kExitOk;
}

// --- shared inversion plumbing -------------------------------------------

struct InverseProblem
{
  PosteriorSpec spec;
  ObserveFn observe;
};

InverseProblem build_inverse_problem(const ExperimentConfig& cfg)
{
  InverseProblem ip;
  double sigma_noise = 0.0;
  std::vector<Dataset> datasets;
  for (const auto& acq : cfg.acquisitions)
  {
    const std::string tag = frequency_tag(acq.fM);
    const fs::path dp = fs::path(cfg.output_dir) / "data" / ("data_" + tag + ".csv");
    const fs::path sp = fs::path(cfg.output_dir) / "data" / ("noise_" + tag + ".json");
    if (!fs::exists(dp) || !fs::exists(sp))
      throw ConfigError("missing data files for " + tag + "; run `generate` first");
    std::ifstream din(dp);
    Dataset ds{acq, read_data_csv(din, acq).values};
    std::ifstream sin(sp);
    Json sidecar;
    sin >> sidecar;
    sigma_noise = std::max(sigma_noise, sidecar.at("sigma_noise").get<double>());
    datasets.push_back(std::move(ds));
  }
  if (!(sigma_noise > 0.0))
    sigma_noise = 1.0;  // noiseless data: unit noise scale in the cost

  ip.spec = cfg.posterior_spec(sigma_noise);
  ip.spec.datasets = datasets;

  auto observers = std::make_shared<std::vector<Observer>>();
  for (const auto& acq : cfg.acquisitions)
    observers->emplace_back(cfg.model, cfg.mesh, acq, cfg.solver);
  ip.observe = [observers](const Vec7& nu) {
    const InclusionParams inc = InclusionParams::from_vector(nu);
    Eigen::Index total = 0;
    std::vector<Eigen::MatrixXd> preds;
    for (const auto& obs : *observers)
    {
      preds.push_back(obs.observe(&inc));
      total += preds.back().size();
    }
    Eigen::VectorXd out(total);
    Eigen::Index at = 0;
    for (const auto& p : preds)
    {
      out.segment(at, p.size()) = Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
      at += p.size();
    }
    return out;
  };
  return ip;
}

// Linear surrogate with a known answer: observation operator F nu with a
// fixed full-rank matrix, checked against the normal-equation solution.
int run_invert_self_test()
{
  Eigen::MatrixXd F(10, 7);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 7; ++j)
      F(i, j) = std::sin(1.0 + 0.7 * i + 1.3 * j) + (i == j ? 2.0 : 0.0);
  PosteriorSpec spec;
  spec.nu0 << 0.0, -1.0, 0.5, 0.2, 0.1, 2.0, 3.0;
  spec.gamma_pr = Mat7::Identity();
  spec.sigma_noise = 0.1;
  spec.rect = {-100, 100, -100, 0};
  Vec7 truth;
  truth << 0.1, -1.2, 0.6, 0.3, 0.2, 2.2, 3.3;
  Dataset ds;
  ds.data = Eigen::MatrixXd(10, 1);
  Eigen::VectorXd d = F * truth;
  for (int i = 0; i < 10; ++i) ds.data(i, 0) = d[i];
  spec.datasets = {ds};
  ObserveFn observe = [F](const Vec7& nu) -> Eigen::VectorXd { return F * nu; };

  LmfConfig cfg;
  cfg.eta = Vec7::Constant(1e-6);
  const LmfResult r = lmf_optimize(spec, cfg, observe);

  const double s2 = spec.sigma_noise * spec.sigma_noise;
  const Mat7 h = F.transpose() * F / s2 + Mat7::Identity();
  const Vec7 expected = h.llt().solve(F.transpose() * d / s2 + spec.nu0);
  const double err = (r.nu_map - expected).norm();
  std::cout << "self-test: |map - analytic| = " << err << "\n";
  return err < 1e-6 ? kExitOk : kExitStall;
}

int cmd_invert(const CliOptions& opts)
{
  if (opts.self_test) return run_invert_self_test();
  const ExperimentConfig cfg = load(opts);
  ensure_layout(cfg);
  InverseProblem ip = build_inverse_problem(cfg);
  LmfConfig lcfg = cfg.lmf;
  lcfg.eta = eta_from_prior(ip.spec);
  const LmfResult r = lmf_optimize(ip.spec, lcfg, ip.observe);

  Json map_json;
  const char* names[7] = {"cx", "cy", "a", "b", "theta", "rho", "vp"};
  for (int i = 0; i < 7; ++i) map_json[names[i]] = r.nu_map[i];
  Json entry;
  entry["map"] = map_json;
  entry["cost"] = r.cost_map;
  entry["status"] = r.status == LmfStatus::converged_step       ? "converged_step"
                    : r.status == LmfStatus::converged_cost     ? "converged_cost"
                    : r.status == LmfStatus::converged_gradient ? "converged_gradient"
                    : r.status == LmfStatus::max_iterations     ? "max_iterations"
                                                                : "stalled";
  const fs::path mp = fs::path(cfg.output_dir) / "opt" / "map.json";
  {
    std::ofstream out(mp);
    out << entry.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(cfg.output_dir) / "opt" / "trace.csv");
    out.precision(17);
    out << "iter,cx,cy,a,b,theta,rho,vp,cost,omega,accepted\n";
    for (std::size_t i = 0; i < r.trace.size(); ++i)
    {
      const auto& it = r.trace[i];
      out << i;
      for (int k = 0; k < 7; ++k) out << "," << it.nu[k];
      out << "," << it.cost << "," << it.omega << "," << (it.accepted ? 1 : 0) << "\n";
    }
  }
  merge_manifest(cfg, "invert", entry);
  std::cout << entry.dump(2) << "\n";
  return r.status == LmfStatus::stalled ? kExitStall : kExitOk;
}

int cmd_laplace(const CliOptions& opts)
{
  const ExperimentConfig cfg = load(opts);
  ensure_layout(cfg);
  const fs::path mp = fs::path(cfg.output_dir) / "opt" / "map.json";
  if (!fs::exists(mp)) throw ConfigError("missing opt/map.json; run `invert` first");
  Json map_json;
  {
    std::ifstream in(mp);
    in >> map_json;
  }
  Vec7 nu_map;
  const char* names[7] = {"cx", "cy", "a", "b", "theta", "rho", "vp"};
  for (int i = 0; i < 7; ++i) nu_map[i] = map_json.at("map").at(names[i]).get<double>();

  InverseProblem ip = build_inverse_problem(cfg);
  LmfConfig lcfg = cfg.lmf;
  lcfg.eta = eta_from_prior(ip.spec);
  const LaplaceResult lr = laplace(ip.spec, nu_map, lcfg, ip.observe);

  Json entry;
  entry["map"] = map_json.at("map");
  Json cov = Json::array();
  for (int i = 0; i < 7; ++i)
  {
    Json row = Json::array();
    for (int j = 0; j < 7; ++j) row.push_back(lr.gamma_pt(i, j));
    cov.push_back(row);
  }
  entry["gamma_pt"] = cov;
  {
    std::ofstream out(fs::path(cfg.output_dir) / "opt" / "laplace.json");
    out << entry.dump(2) << "\n";
  }
  const Eigen::MatrixXd samples =
      laplace_sample(lr, cfg.laplace_samples, cfg.laplace_seed);
  {
    std::ofstream out(fs::path(cfg.output_dir) / "opt" / "laplace_samples.csv");
    out.precision(17);
    out << "cx,cy,a,b,theta,rho,vp\n";
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
    {
      for (int k = 0; k < 7; ++k) out << (k ? "," : "") << samples(i, k);
      out << "\n";
    }
  }
  merge_manifest(cfg, "laplace", entry);
  std::cout << entry.dump(2) << "\n";
  return kExitOk;
}

// Analytic 7D standard Gaussian target: moment checks with no PDE behind
// the density.
int run_sample_self_test()
{
  EnsembleConfig cfg;
  cfg.walkers = 32;
  cfg.steps = 2000;
  cfg.seed = 7;
  LogDensityFn target = [](const Vec7& nu) { return -0.5 * nu.squaredNorm(); };
  EnsembleState init;
  init.walkers.resize(cfg.walkers, 7);
  init.log_post.resize(cfg.walkers);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int w = 0; w < cfg.walkers; ++w)
  {
    for (int i = 0; i < 7; ++i) init.walkers(w, i) = normal(rng);
    init.log_post[w] = target(init.walkers.row(w).transpose());
  }
  const EnsembleRun run = run_ensemble_from(cfg, target, init);
  const Eigen::MatrixXd post = run.chains.post_burn_in();
  const Eigen::VectorXd mean = post.colwise().mean();
  double max_mean = mean.cwiseAbs().maxCoeff();
  double max_var_err = 0.0;
  for (int i = 0; i < 7; ++i)
  {
    const double var = (post.col(i).array() - mean[i]).square().mean();
    max_var_err = std::max(max_var_err, std::abs(var - 1.0));
  }
  std::cout << "self-test: max |mean| = " << max_mean
            << ", max |var - 1| = " << max_var_err
            << ", acceptance = " << run.chains.acceptance_rate() << "\n";
  return (max_mean < 0.15 && max_var_err < 0.2) ? kExitOk : kExitSampler;
}

int cmd_sample(const CliOptions& opts)
{
  if (opts.self_test) return run_sample_self_test();
  const ExperimentConfig cfg = load(opts);
  ensure_layout(cfg);
  InverseProblem ip = build_inverse_problem(cfg);
  const PosteriorSpec spec = ip.spec;
  const ObserveFn observe = ip.observe;
  LogDensityFn target = [spec, observe](const Vec7& nu) {
    return log_posterior(spec, nu, observe);
  };
  const EnsembleRun run = run_ensemble(spec, cfg.mcmc, target);

  const fs::path dir = fs::path(cfg.output_dir) / "mcmc";
  {
    std::ofstream out(dir / "chains.csv");
    out.precision(17);
    out << "step,walker,cx,cy,a,b,theta,rho,vp,log_post\n";
    for (int k = 0; k < run.chains.steps; ++k)
      for (int w = 0; w < run.chains.walkers; ++w)
      {
        out << k << "," << w;
        for (int i = 0; i < 7; ++i) out << "," << run.chains.samples(run.chains.row(k, w), i);
        out << "," << run.chains.log_post(k, w) << "\n";
      }
  }
  {
    const ContourGrid grid = membership_contour(run.chains, spec.rect, 60, 60);
    std::ofstream out(dir / "contour.csv");
    out.precision(10);
    out << "y\\x";
    for (int ix = 0; ix < grid.nx; ++ix)
      out << "," << spec.rect.xmin + (ix + 0.5) * spec.rect.width() / grid.nx;
    out << "\n";
    for (int iy = 0; iy < grid.ny; ++iy)
    {
      out << spec.rect.ymax - (iy + 0.5) * spec.rect.height() / grid.ny;
      for (int ix = 0; ix < grid.nx; ++ix) out << "," << grid.probability(iy, ix);
      out << "\n";
    }
  }
  {
    const char* names[7] = {"cx", "cy", "a", "b", "theta", "rho", "vp"};
    const auto hists = histograms(run.chains, {0, 1, 2, 3, 4, 5, 6});
    for (int i = 0; i < 7; ++i)
    {
      std::ofstream out(dir / (std::string("hist_") + names[i] + ".csv"));
      out.precision(10);
      out << "center,density\n";
      const double w = hists[i].bin_width();
      for (Eigen::Index b = 0; b < hists[i].density.size(); ++b)
        out << hists[i].lo + (b + 0.5) * w << "," << hists[i].density[b] << "\n";
    }
  }
  Json entry;
  entry["acceptance_rate"] = run.chains.acceptance_rate();
  entry["walkers"] = run.chains.walkers;
  entry["steps"] = run.chains.steps;
  entry["burn_in"] = run.chains.burn_in;
  entry["seed"] = cfg.mcmc.seed;
  entry["failed_evaluations"] = run.chains.failed_evaluations;
  entry["chain_map"] = vec7_json(run.nu_map);
  entry["autocorrelation_cx"] = integrated_autocorrelation(run.chains, 0);
  merge_manifest(cfg, "sample", entry);
  std::cout << entry.dump(2) << "\n";
  return kExitOk;
}

int cmd_report(const CliOptions& opts)
{
  const ExperimentConfig cfg = load(opts);
  const fs::path path = fs::path(cfg.output_dir) / "manifest.json";
  if (!fs::exists(path))
    throw ConfigError("no manifest.json under " + cfg.output_dir +
                      "; run a pipeline command first");
  Json manifest;
  {
    std::ifstream in(path);
    in >> manifest;
  }
  std::cout << manifest.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Layered-subsurface inclusion identification pipeline"};
  app.require_subcommand(1);

  CliOptions opts;
  app.add_option("--config", opts.config_path, "experiment JSON configuration");
  app.add_option("--workers", opts.workers, "worker pool size (default: cores)");
  auto* seed_opt = app.add_option("--seed", opts.seed, "override all RNG seeds");
  app.add_option("--set", opts.overrides, "dotted-key config override key=value");

  auto* mesh_cmd = app.add_subcommand("mesh", "generate the mesh and quality report");
  auto* fwd_cmd = app.add_subcommand("forward", "clean forward solve to CSV");
  auto* gen_cmd = app.add_subcommand("generate", "synthetic noisy data to CSV");
  auto* inv_cmd = app.add_subcommand("invert", "MAP estimation");
  inv_cmd->add_flag("--self-test", opts.self_test,
                    "run the analytic surrogate problem instead");
  auto* lap_cmd = app.add_subcommand("laplace", "Gaussian posterior approximation");
  auto* smp_cmd = app.add_subcommand("sample", "ensemble MCMC sampling");
  smp_cmd->add_flag("--self-test", opts.self_test,
                    "run the analytic Gaussian target instead");
  auto* rep_cmd = app.add_subcommand("report", "print the run manifest");

  CLI11_PARSE(app, argc, argv);
  opts.seed_set = seed_opt->count() > 0;

  try
  {
    if (mesh_cmd->parsed()) return cmd_mesh(opts);
    if (fwd_cmd->parsed()) return cmd_forward(opts, false);
    if (gen_cmd->parsed()) return cmd_forward(opts, true);
    if (inv_cmd->parsed()) return cmd_invert(opts);
    if (lap_cmd->parsed()) return cmd_laplace(opts);
    if (smp_cmd->parsed()) return cmd_sample(opts);
    if (rep_cmd->parsed()) return cmd_report(opts);
  }
  catch (const MeshingError& e)
  {
    std::cerr << "mesh error: " << e.what() << "\n";
    return kExitMesh;
  }
  catch (const SamplerError& e)
  {
    std::cerr << "sampler error: " << e.what() << "\n";
    return kExitSampler;
  }
  catch (const ConfigError& e)
  {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  catch (const Json::exception& e)
  {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
