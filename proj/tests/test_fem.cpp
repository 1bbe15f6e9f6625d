#include "wavemap/fem.hpp"

#include "scenes.hpp"

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace wavemap;
using wavemap::testing::reference_inclusion;
using wavemap::testing::reference_model;

namespace
{

Mesh single_triangle_mesh()
{
  Mesh mesh;
  mesh.rect = {0.0, 1.0, -1.0, 0.0};
  mesh.points = {{0.0, -1.0}, {1.0, -1.0}, {0.0, 0.0}};
  mesh.triangles = {{0, 1, 2}};
  mesh.region_label = {0};
  detail::classify_boundary(mesh);
  return mesh;
}

LayeredModel unit_model()
{
  LayeredModel model;
  model.rect = {0.0, 1.0, -1.0, 0.0};
  model.layers = {{1.0, 1.0}};
  return model;
}

SourceField no_source()
{
  SourceField s;
  s.emitters = {0.5};
  s.f0 = 0.0;
  return s;
}

double max_abs_diff(const SpMat& a, const SpMat& b)
{
  return (Eigen::MatrixXd(a) - Eigen::MatrixXd(b)).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("element mass matrix on a unit right triangle")
{
  const Mesh mesh = single_triangle_mesh();
  const AssembledSystem sys = assemble(mesh, unit_model(), nullptr, no_source());
  Eigen::Matrix3d expected;
  expected << 2, 1, 1, 1, 2, 1, 1, 1, 2;
  expected /= 24.0;  // rho * area / 12 with rho = 1, area = 1/2
  CHECK((Eigen::MatrixXd(sys.B) - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("stiffness annihilates constants")
{
  MeshSpec spec{MeshRegime::stratified, 0.1, reference_model(), std::nullopt};
  const Mesh mesh = stratified_mesh(spec);
  const AssembledSystem sys = assemble(mesh, reference_model(), nullptr, no_source());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(sys.dof_count);
  CHECK((sys.C * ones).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("assembled matrices: symmetry, definiteness, sparsity pattern")
{
  const LayeredModel model = reference_model();
  const InclusionParams inc = reference_inclusion();
  MeshSpec spec{MeshRegime::uniform, 0.1, model, inc};
  const Mesh mesh = uniform_mesh(spec);
  SourceField src;
  src.emitters = {0.0};
  const AssembledSystem sys = assemble(mesh, model, &inc, src);

  CHECK(max_abs_diff(sys.B, SpMat(sys.B.transpose())) == 0.0);
  CHECK(max_abs_diff(sys.C, SpMat(sys.C.transpose())) == 0.0);
  CHECK(max_abs_diff(sys.E, SpMat(sys.E.transpose())) == 0.0);

  Eigen::SimplicialLLT<SpMat> llt(sys.B);
  CHECK(llt.info() == Eigen::Success);

  // E nonzeros only on absorbing-boundary node pairs
  std::vector<bool> absorbing(static_cast<std::size_t>(sys.dof_count), false);
  for (const auto& be : mesh.boundary_edges)
    if (be.kind == EdgeKind::absorbing)
      absorbing[static_cast<std::size_t>(be.a)] = absorbing[static_cast<std::size_t>(be.b)] = true;
  for (int k = 0; k < sys.E.outerSize(); ++k)
    for (SpMat::InnerIterator it(sys.E, k); it; ++it)
      if (it.value() != 0.0)
      {
        CHECK(absorbing[static_cast<std::size_t>(it.row())]);
        CHECK(absorbing[static_cast<std::size_t>(it.col())]);
      }
}

TEST_CASE("total mass matches a Monte-Carlo density integral")
{
  const LayeredModel model = reference_model();
  const InclusionParams inc = reference_inclusion();
  MeshSpec spec{MeshRegime::uniform, 0.04, model, inc};
  const Mesh mesh = uniform_mesh(spec);
  const AssembledSystem sys = assemble(mesh, model, &inc, no_source());

  double mass = 0.0;
  for (int k = 0; k < sys.B.outerSize(); ++k)
    for (SpMat::InnerIterator it(sys.B, k); it; ++it) mass += it.value();

  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> ux(-1.5, 1.5), uy(-3.0, 0.0);
  const long n = 10'000'000;
  double acc = 0.0;
  for (long i = 0; i < n; ++i)
    acc += material_at(model, &inc, {ux(rng), uy(rng)}).rho;
  const double mc = 9.0 * acc / static_cast<double>(n);
  CHECK(mass == Catch::Approx(mc).epsilon(0.005));
}

TEST_CASE("load vector mass: half of each surface Gaussian lies inside the domain")
{
  const LayeredModel model = reference_model();
  MeshSpec spec{MeshRegime::uniform, 0.02, model, std::nullopt};
  const Mesh mesh = uniform_mesh(spec);
  SourceField src;
  for (int k = 0; k <= 50; ++k) src.emitters.push_back(-1.0 + 0.04 * k);
  src.kappa = 0.04;
  const AssembledSystem sys = assemble(mesh, model, nullptr, src);
  const double total = sys.h_vec.sum();
  // int rho G over R: ~half of each unit-mass Gaussian is above y=0
  const double expected = 0.5 * 51.0 * model.layers[0].rho;
  CHECK(total == Catch::Approx(expected).epsilon(0.02));
}

TEST_CASE("update_inclusion matches full reassembly")
{
  const LayeredModel model = reference_model();
  const InclusionParams inc = reference_inclusion();
  MeshSpec spec{MeshRegime::uniform, 0.1, model, std::nullopt};
  const Mesh mesh = uniform_mesh(spec);
  SourceField src;
  src.emitters = {0.0};
  src.kappa = 0.04;
  const AssembledSystem base = assemble(mesh, model, nullptr, src);

  SECTION("identity update leaves matrices bitwise equal")
  {
    const AssembledSystem upd = update_inclusion(base, mesh, model, nullptr, nullptr, src);
    CHECK(max_abs_diff(upd.B, base.B) == 0.0);
    CHECK(max_abs_diff(upd.C, base.C) == 0.0);
    CHECK(max_abs_diff(upd.E, base.E) == 0.0);
    CHECK((upd.h_vec - base.h_vec).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("insertion matches fresh assembly")
  {
    // a fresh assembly needs a mesh labeled against the inclusion; the banded
    // point layout is identical, only the region labels change
    const Mesh inc_mesh = uniform_mesh({MeshRegime::uniform, 0.1, model, inc});
    const AssembledSystem upd = update_inclusion(base, mesh, model, nullptr, &inc, src);
    const AssembledSystem fresh = assemble(inc_mesh, model, &inc, src);
    CHECK(max_abs_diff(upd.B, fresh.B) < 1e-14);
    CHECK(max_abs_diff(upd.C, fresh.C) < 1e-13);
    CHECK(max_abs_diff(upd.E, fresh.E) < 1e-13);
    CHECK((upd.h_vec - fresh.h_vec).cwiseAbs().maxCoeff() < 1e-14);
  }
  SECTION("moving the inclusion fully away matches fresh assembly")
  {
    InclusionParams moved = inc;
    moved.cx = -0.9;
    moved.cy = -2.2;
    moved.a = 0.2;
    moved.b = 0.1;
    const Mesh moved_mesh = uniform_mesh({MeshRegime::uniform, 0.1, model, moved});
    const AssembledSystem with_old = update_inclusion(base, mesh, model, nullptr, &inc, src);
    const AssembledSystem upd = update_inclusion(with_old, mesh, model, &inc, &moved, src);
    const AssembledSystem fresh = assemble(moved_mesh, model, &moved, src);
    CHECK(max_abs_diff(upd.B, fresh.B) < 1e-13);
    CHECK(max_abs_diff(upd.C, fresh.C) < 1e-12);
    CHECK((upd.h_vec - fresh.h_vec).cwiseAbs().maxCoeff() < 1e-13);
  }
  SECTION("host-material inclusion equals the no-inclusion assembly")
  {
    InclusionParams ghost = inc;
    ghost.rho = 2.49;  // host layer material
    ghost.vp = 2.8;
    const AssembledSystem upd = update_inclusion(base, mesh, model, nullptr, &ghost, src);
    CHECK(max_abs_diff(upd.B, base.B) < 1e-13);
    CHECK(max_abs_diff(upd.C, base.C) < 1e-12);
  }
}

TEST_CASE("label out of range raises an assembly error")
{
  Mesh mesh = single_triangle_mesh();
  mesh.region_label = {5};
  CHECK_THROWS_AS(assemble(mesh, unit_model(), nullptr, no_source()), AssemblyError);
}
