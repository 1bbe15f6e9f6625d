#ifndef WAVEMAP_OBSERVATION_HPP
#define WAVEMAP_OBSERVATION_HPP

#include "wavemap/fem.hpp"
#include "wavemap/geometry.hpp"
#include "wavemap/mesh.hpp"
#include "wavemap/wavesolver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

namespace wavemap
{

/// One shot configuration: surface receivers, the recording grid and the
/// emitted signal for this frequency.
struct Acquisition
{
  std::vector<double> receivers;  // x coordinates on y = 0
  double record_dt = 0.1;
  double t_final = 2.5;
  double fM = 2.0;
  SourceField source;

  int sample_count() const
  {
    // recording starts at t = record_dt; t = 0 carries no information
    return static_cast<int>(std::floor(t_final / record_dt + 1e-9));
  }
};

inline Acquisition default_acquisition()
{
  Acquisition acq;
  for (int j = 0; j <= 51; ++j) acq.receivers.push_back(-1.02 + 0.04 * j);
  for (int k = 0; k <= 50; ++k) acq.source.emitters.push_back(-1.0 + 0.04 * k);
  acq.source.kappa = 0.04;
  acq.record_dt = 0.1;
  acq.t_final = 2.5;
  acq.fM = 2.0;
  return acq;
}

struct DataMatrix
{
  Eigen::MatrixXd values;  // receivers x recording times
  Acquisition acquisition;
};

struct SolverConfig
{
  double dt = 1e-3;
  BoundaryVariant variant = BoundaryVariant::second_order;
  bool enforce_cfl = true;
  double cfl_safety = 0.9;
};

namespace detail
{

struct ReceiverInterp
{
  std::array<int, 3> nodes;
  Eigen::Vector3d weights;
};

inline std::vector<ReceiverInterp> locate_receivers(const Mesh& mesh,
                                                    const std::vector<double>& xs)
{
  std::vector<ReceiverInterp> interp;
  interp.reserve(xs.size());
  const double tol = 1e-9;
  for (double rx : xs)
  {
    const Point p{rx, mesh.rect.ymax};
    bool found = false;
    for (int t = 0; t < mesh.triangle_count() && !found; ++t)
    {
      const auto& tr = mesh.triangles[t];
      const Point& p0 = mesh.points[tr[0]];
      const Point& p1 = mesh.points[tr[1]];
      const Point& p2 = mesh.points[tr[2]];
      const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
      if (std::abs(det) < 1e-16) continue;
      const double w1 =
          ((p.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p.y - p0.y)) / det;
      const double w2 =
          ((p1.x - p0.x) * (p.y - p0.y) - (p.x - p0.x) * (p1.y - p0.y)) / det;
      const double w0 = 1.0 - w1 - w2;
      if (w0 >= -tol && w1 >= -tol && w2 >= -tol)
      {
        interp.push_back({tr, Eigen::Vector3d(w0, w1, w2)});
        found = true;
      }
    }
    if (!found)
      throw ConfigError("observation: receiver outside the mesh");
  }
  return interp;
}

}  // namespace detail

/// Forward-model evaluation at the receivers on the recording grid, reusing
/// a mesh and base assembly for fixed regimes. The adapted regime rebuilds
/// its mesh for every inclusion.
class Observer
{
public:
  Observer(LayeredModel model, MeshSpec mesh_spec, Acquisition acq, SolverConfig cfg)
      : model_(std::move(model)), spec_(std::move(mesh_spec)), acq_(std::move(acq)),
        cfg_(cfg)
  {
    const double q = acq_.record_dt / cfg_.dt;
    stride_ = static_cast<int>(std::lround(q));
    if (std::abs(q - stride_) > 1e-9 || stride_ < 1)
      throw ConfigError("observation: record_dt must be a multiple of dt");
    if (spec_.regime != MeshRegime::adapted)
    {
      MeshSpec base = spec_;
      base.inclusion.reset();
      mesh_ = generate_mesh(base);
      base_sys_ = assemble(mesh_, model_, nullptr, acq_.source);
      interp_ = detail::locate_receivers(mesh_, acq_.receivers);
    }
  }

  const LayeredModel& model() const { return model_; }
  const Acquisition& acquisition() const { return acq_; }
  const MeshSpec& mesh_spec() const { return spec_; }
  const SolverConfig& solver_config() const { return cfg_; }

  Eigen::MatrixXd observe(const InclusionParams* inc) const
  {
    if (spec_.regime == MeshRegime::adapted)
    {
      if (inc == nullptr)
        throw ConfigError("adapted observation requires an inclusion");
      MeshSpec s = spec_;
      s.inclusion = *inc;
      Mesh mesh = generate_mesh(s);
      AssembledSystem sys = assemble(mesh, model_, inc, acq_.source);
      return run(mesh, sys, inc);
    }
    if (inc == nullptr) return run(mesh_, base_sys_, nullptr);
    AssembledSystem sys =
        update_inclusion(base_sys_, mesh_, model_, nullptr, inc, acq_.source);
    return run(mesh_, sys, inc);
  }

  DataMatrix observe_data(const InclusionParams* inc) const
  {
    return {observe(inc), acq_};
  }

private:
  Eigen::MatrixXd run(const Mesh& mesh, const AssembledSystem& sys,
                      const InclusionParams* inc) const
  {
    const auto interp = spec_.regime == MeshRegime::adapted
                            ? detail::locate_receivers(mesh, acq_.receivers)
                            : interp_;
    const int n_rec = static_cast<int>(acq_.receivers.size());
    const int m_rec = acq_.sample_count();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_rec, m_rec);

    TimeGrid grid{cfg_.dt, m_rec * stride_};
    RickerSignal sig{0.1, acq_.fM};
    SolveOptions opts;
    opts.dt_max = cfl_bound(model_, inc, spec_.h);
    opts.enforce_cfl = cfg_.enforce_cfl;
    opts.cfl_safety = cfg_.cfl_safety;

    solve(sys, grid, sig, cfg_.variant,
          [&](int n, const Eigen::VectorXd& a) {
            if (n == 0 || n % stride_ != 0) return;
            const int m = n / stride_ - 1;
            if (m >= m_rec) return;
            for (int j = 0; j < n_rec; ++j)
            {
              const auto& ri = interp[j];
              out(j, m) = ri.weights[0] * a[ri.nodes[0]] +
                          ri.weights[1] * a[ri.nodes[1]] +
                          ri.weights[2] * a[ri.nodes[2]];
            }
          },
          opts);
    return out;
  }

  LayeredModel model_;
  MeshSpec spec_;
  Acquisition acq_;
  SolverConfig cfg_;
  int stride_ = 1;
  Mesh mesh_;
  AssembledSystem base_sys_;
  std::vector<detail::ReceiverInterp> interp_;
};

inline DataMatrix observe(const LayeredModel& model, const InclusionParams& inc,
                          const MeshSpec& mesh_spec, const Acquisition& acq,
                          const SolverConfig& cfg)
{
  Observer obs(model, mesh_spec, acq, cfg);
  return obs.observe_data(&inc);
}

// --- synthetic noise -----------------------------------------------------

inline double noise_sigma(const Eigen::MatrixXd& d_true)
{
  if (d_true.size() == 0) throw std::domain_error("noise_sigma: empty data");
  return std::sqrt(d_true.squaredNorm() / static_cast<double>(d_true.size()));
}

struct NoisyData
{
  DataMatrix data;
  double sigma = 0.0;        // RMS of the clean data
  double sigma_noise = 0.0;  // sigma * r / 100
  double noise_percent = 0.0;
  std::uint64_t seed = 0;
};

inline NoisyData add_noise(const DataMatrix& d_true, double r, std::uint64_t seed)
{
  if (r < 0.0) throw std::domain_error("add_noise: negative noise level");
  NoisyData out{d_true, noise_sigma(d_true.values), 0.0, r, seed};
  out.sigma_noise = out.sigma * r / 100.0;
  if (r == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < out.data.values.rows(); ++j)
    for (Eigen::Index m = 0; m < out.data.values.cols(); ++m)
      out.data.values(j, m) += out.sigma_noise * normal(rng);
  return out;
}

// --- CSV serialization ---------------------------------------------------

inline void write_data_csv(std::ostream& os, const DataMatrix& d)
{
  os.precision(17);
  os << "x";
  for (int m = 1; m <= d.values.cols(); ++m) os << "," << m * d.acquisition.record_dt;
  os << "\n";
  for (Eigen::Index j = 0; j < d.values.rows(); ++j)
  {
    os << d.acquisition.receivers[static_cast<std::size_t>(j)];
    for (Eigen::Index m = 0; m < d.values.cols(); ++m) os << "," << d.values(j, m);
    os << "\n";
  }
}

inline DataMatrix read_data_csv(std::istream& is, Acquisition acq)
{
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("data csv: missing header");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line))
  {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("data csv: no rows");
  DataMatrix d;
  d.acquisition = std::move(acq);
  d.values.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows[0].size()) - 1);
  for (std::size_t j = 0; j < rows.size(); ++j)
  {
    if (rows[j].size() != rows[0].size())
      throw ConfigError("data csv: ragged rows");
    for (std::size_t m = 1; m < rows[j].size(); ++m)
      d.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(m - 1)) =
          rows[j][m];
  }
  return d;
}

}  // namespace wavemap

#endif
