// Microbenchmarks comparing the parallel kernels against their serial
// reference implementations, plus the cost of the prefactored position
// solve. Run with PHYDEFORMER_THREADS=N to see the scaling.
#include <benchmark/benchmark.h>

#include <random>

#include "phydeformer/losses.hpp"
#include "phydeformer/poisson_system.hpp"
#include "phydeformer/sdf_body.hpp"
#include "phydeformer/trimesh.hpp"
#include "support/test_meshes.hpp"

using namespace phydeformer;
namespace tmesh = testmesh;

namespace {

TriMesh bench_mesh() { return tmesh::tube(120, 80, 0.3, 0.0, 0.8); }  // 19k faces

std::vector<Vec3> deformed(const TriMesh& mesh) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  std::vector<Vec3> x = mesh.positions;
  for (auto& p : x) p += Vec3(u(rng), u(rng), u(rng));
  return x;
}

void bm_face_normals(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  for (auto _ : state) benchmark::DoNotOptimize(face_normals(mesh));
}
void bm_face_normals_serial(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  for (auto _ : state) benchmark::DoNotOptimize(face_normals_serial(mesh));
}

void bm_vertex_normals(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  for (auto _ : state) benchmark::DoNotOptimize(vertex_normals(mesh));
}
void bm_vertex_normals_serial(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  for (auto _ : state) benchmark::DoNotOptimize(vertex_normals_serial(mesh));
}

void bm_strain(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  const RestState rest = build_rest_state(mesh);
  const auto x = deformed(mesh);
  for (auto _ : state) benchmark::DoNotOptimize(strain_stvk(x, mesh, rest, 16.3, 13.5));
}
void bm_strain_serial(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  const RestState rest = build_rest_state(mesh);
  const auto x = deformed(mesh);
  for (auto _ : state) benchmark::DoNotOptimize(strain_stvk_serial(x, mesh, rest, 16.3, 13.5));
}

void bm_bending(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  const RestState rest = build_rest_state(mesh);
  const auto x = deformed(mesh);
  for (auto _ : state)
    benchmark::DoNotOptimize(bending(x, rest, 4e-5, BendingMode::RestRelative));
}
void bm_bending_serial(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  const RestState rest = build_rest_state(mesh);
  const auto x = deformed(mesh);
  for (auto _ : state)
    benchmark::DoNotOptimize(bending_serial(x, rest, 4e-5, BendingMode::RestRelative));
}

void bm_sdf_batch(benchmark::State& state) {
  const SdfBody body(tmesh::icosphere(3, 0.5));
  const TriMesh mesh = bench_mesh();
  for (auto _ : state) benchmark::DoNotOptimize(body.query_batch(mesh.positions));
}
void bm_sdf_batch_serial(benchmark::State& state) {
  const SdfBody body(tmesh::icosphere(3, 0.5));
  const TriMesh mesh = bench_mesh();
  for (auto _ : state) benchmark::DoNotOptimize(body.query_batch_serial(mesh.positions));
}

void bm_poisson_factorize(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  for (auto _ : state) benchmark::DoNotOptimize(PoissonSystem(mesh));
}

void bm_poisson_solve(benchmark::State& state) {
  const TriMesh mesh = bench_mesh();
  const PoissonSystem system(mesh);
  const JacobianField field = system.jacobians_from_positions(deformed(mesh));
  for (auto _ : state) benchmark::DoNotOptimize(system.solve(field, Vec3::Zero()));
}

BENCHMARK(bm_face_normals);
BENCHMARK(bm_face_normals_serial);
BENCHMARK(bm_vertex_normals);
BENCHMARK(bm_vertex_normals_serial);
BENCHMARK(bm_strain);
BENCHMARK(bm_strain_serial);
BENCHMARK(bm_bending);
BENCHMARK(bm_bending_serial);
BENCHMARK(bm_sdf_batch);
BENCHMARK(bm_sdf_batch_serial);
BENCHMARK(bm_poisson_factorize);
BENCHMARK(bm_poisson_solve);

}  // namespace

BENCHMARK_MAIN();
