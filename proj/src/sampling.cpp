#include "phydeformer/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "phydeformer/errors.hpp"
#include "phydeformer/parallel.hpp"

namespace phydeformer {

namespace {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

SurfaceSamples sample_surface(const TriMesh& mesh, double samples_per_face, std::uint64_t seed) {
  if (samples_per_face < 0.0) throw ConfigError("samples per face must be >= 0");
  const int nf = mesh.face_count();
  const long long total = std::llround(samples_per_face * nf);

  auto areas = face_areas(mesh);
  const double area_sum = std::accumulate(areas.begin(), areas.end(), 0.0);
  if (nf == 0 || total == 0 || area_sum <= 0.0) return {};

  // Largest-remainder allocation of `total` samples proportional to area.
  std::vector<long long> quota(nf);
  std::vector<std::pair<double, int>> remainder(nf);
  long long assigned = 0;
  for (int f = 0; f < nf; ++f) {
    double exact = static_cast<double>(total) * areas[f] / area_sum;
    quota[f] = static_cast<long long>(std::floor(exact));
    assigned += quota[f];
    remainder[f] = {exact - static_cast<double>(quota[f]), f};
  }
  std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // equal remainders: lower face index wins
  });
  for (long long i = 0; i < total - assigned; ++i) quota[remainder[i].second]++;

  SurfaceSamples samples;
  samples.face.reserve(total);
  samples.bary.reserve(total);
  std::vector<long long> offset(nf + 1, 0);
  for (int f = 0; f < nf; ++f) offset[f + 1] = offset[f] + quota[f];
  samples.face.resize(total);
  samples.bary.resize(total);

  parallel_for(nf, [&](long long f) {
    // Per-face generator: allocation-independent of thread count.
    std::mt19937_64 eng(
        splitmix64(seed ^ splitmix64(0x51ab17e5ull + static_cast<std::uint64_t>(f))));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (long long i = offset[f]; i < offset[f + 1]; ++i) {
      double u = uni(eng), v = uni(eng);
      if (u + v > 1.0) {  // fold into the triangle
        u = 1.0 - u;
        v = 1.0 - v;
      }
      samples.face[i] = static_cast<int>(f);
      samples.bary[i] = Vec3(1.0 - u - v, u, v);
    }
  });
  return samples;
}

std::vector<Vec3> sample_positions(const SurfaceSamples& samples, const TriMesh& topology,
                                   const std::vector<Vec3>& positions) {
  std::vector<Vec3> out(samples.count());
  parallel_for(samples.count(), [&](long long i) {
    const auto& tri = topology.faces[samples.face[i]];
    const Vec3& b = samples.bary[i];
    out[i] = b[0] * positions[tri[0]] + b[1] * positions[tri[1]] + b[2] * positions[tri[2]];
  });
  return out;
}

}  // namespace phydeformer
