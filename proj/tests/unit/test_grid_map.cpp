#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "../support/oracles.hpp"
#include "replan/grid_map.hpp"

using namespace replan;

namespace {

VoxelMap random_map(std::mt19937_64& rng, int n, double occupancy, double res = 0.1) {
  VoxelMap map(Vec3(-1.0, 0.5, 0.0), res, Idx3(n, n, n));
  std::bernoulli_distribution occ(occupancy);
  for (std::size_t i = 0; i < map.size(); ++i) map.set_state(i, occ(rng) ? VoxelState::kOccupied : VoxelState::kFree);
  return map;
}

struct IdxLess {
  bool operator()(const Idx3& a, const Idx3& b) const {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  }
};

}  // namespace

TEST_CASE("raycast degenerate and axis-aligned segments") {
  VoxelMap map(Vec3::Zero(), 0.5, Idx3(10, 10, 10));
  const Vec3 p(1.3, 2.1, 0.2);
  const auto one = map.raycast(p, p);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == Idx3(2, 4, 0));

  const auto line = map.raycast(Vec3(0.25, 1.25, 1.25), Vec3(2.25, 1.25, 1.25));
  REQUIRE(line.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(line[i] == Idx3(i, 2, 2));

  CHECK_THROWS_AS(map.raycast(Vec3(-0.1, 0, 0), p), Error);
}

TEST_CASE("raycast matches exact box intersection and covers dense samples") {
  std::mt19937_64 rng(7);
  VoxelMap map(Vec3(-2.0, -1.0, 0.5), 0.2, Idx3(30, 25, 20));
  std::uniform_real_distribution<double> ux(-2.0, 4.0), uy(-1.0, 4.0), uz(0.5, 4.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 a(ux(rng), uy(rng), uz(rng)), b(ux(rng), uy(rng), uz(rng));
    const auto cast = map.raycast(a, b);
    std::set<Idx3, IdxLess> got(cast.begin(), cast.end());
    REQUIRE(got.size() == cast.size());

    // Exact oracle: every voxel whose box the segment crosses with positive length.
    std::set<Idx3, IdxLess> expect;
    const Idx3 lo = map.index_of(a.cwiseMin(b)), hi = map.index_of(a.cwiseMax(b));
    for (int z = lo.z(); z <= hi.z(); ++z)
      for (int y = lo.y(); y <= hi.y(); ++y)
        for (int x = lo.x(); x <= hi.x(); ++x) {
          const Idx3 idx(x, y, z);
          const Vec3 c = map.center(idx);
          const Vec3 h = Vec3::Constant(0.1);
          if (oracle::segment_hits_box(a, b, c - h, c + h)) expect.insert(idx);
        }
    REQUIRE(got == expect);

    // Dense sampling at resolution / 10 never finds a voxel the walk skipped.
    const int n = static_cast<int>(std::ceil((b - a).norm() / 0.02));
    for (int i = 0; i <= n; ++i) {
      const Vec3 p = a + (b - a) * (double(i) / std::max(n, 1));
      REQUIRE(got.count(map.index_of(p)) == 1);
    }
    // Traversal order: consecutive voxels are face neighbours.
    for (std::size_t i = 1; i < cast.size(); ++i) REQUIRE((cast[i] - cast[i - 1]).cwiseAbs().sum() == 1);
  }
}

TEST_CASE("sense reveals the full sphere in an empty world") {
  VoxelMap world(Vec3::Zero(), 0.2, Idx3(30, 30, 20));
  world.fill(VoxelState::kFree);
  VoxelMap belief(world.origin(), world.resolution(), world.dims());
  SensorModel s{2.0 * std::numbers::pi, std::numbers::pi, 1.5};
  const Pose pose{Vec3(3.05, 2.95, 2.01), 0.3};
  const std::size_t revealed = sense(belief, world, pose, s);

  std::size_t expect = 0;
  for (std::size_t n = 0; n < world.size(); ++n)
    if ((world.center(world.unravel(n)) - pose.position).norm() <= s.max_range) ++expect;
  CHECK(revealed == expect);
  CHECK(belief.state_at(pose.position + Vec3(1.0, 0.0, 0.0)) == VoxelState::kFree);
  CHECK(belief.state_at(pose.position + Vec3(1.6, 0.0, 0.0)) == VoxelState::kUnknown);
  CHECK(belief.esdf_dirty());

  VoxelMap again(world.origin(), world.resolution(), world.dims());
  CHECK(sense(again, world, pose, SensorModel{1.0, 1.0, 0.0}) == 0);
}

TEST_CASE("sense respects occlusion by a wall") {
  VoxelMap world(Vec3::Zero(), 0.2, Idx3(30, 30, 10));
  world.fill(VoxelState::kFree);
  for (int y = 0; y < 30; ++y)
    for (int z = 0; z < 10; ++z) world.set_state(Idx3(15, y, z), VoxelState::kOccupied);
  VoxelMap belief(world.origin(), world.resolution(), world.dims());
  sense(belief, world, Pose{Vec3(2.0, 3.0, 1.0), 0.0}, SensorModel{1.5, 1.0, 5.0});
  CHECK(belief.state_at(Vec3(3.01, 3.0, 1.0)) == VoxelState::kOccupied);
  CHECK(belief.state_at(Vec3(2.5, 3.0, 1.0)) == VoxelState::kFree);
  CHECK(belief.state_at(Vec3(3.5, 3.0, 1.0)) == VoxelState::kUnknown);
  CHECK(belief.state_at(Vec3(4.5, 3.1, 1.0)) == VoxelState::kUnknown);
  CHECK_THROWS_AS(sense(belief, world, Pose{Vec3(-1.0, 3.0, 1.0), 0.0}, SensorModel{}), Error);
}

TEST_CASE("sensing is monotone and occlusion sound") {
  std::mt19937_64 rng(11);
  VoxelMap world(Vec3::Zero(), 0.25, Idx3(24, 24, 8));
  std::bernoulli_distribution occ(0.08);
  for (std::size_t i = 0; i < world.size(); ++i) world.set_state(i, occ(rng) ? VoxelState::kOccupied : VoxelState::kFree);
  VoxelMap belief(world.origin(), world.resolution(), world.dims());
  std::uniform_real_distribution<double> u(0.5, 5.5), yaw(-3.0, 3.0);
  SensorModel s{1.6, 1.0, 3.0};
  std::size_t known_before = 0;
  for (int step = 0; step < 15; ++step) {
    const std::vector<VoxelState> prev = belief.states();
    const Pose pose{Vec3(u(rng), u(rng), 1.0), yaw(rng)};
    sense(belief, world, pose, s);
    std::size_t known = 0;
    for (std::size_t n = 0; n < belief.size(); ++n) {
      if (prev[n] != VoxelState::kUnknown) REQUIRE(belief.state(n) == prev[n]);
      if (belief.state(n) != VoxelState::kUnknown) ++known;
      if (prev[n] == VoxelState::kUnknown && belief.state(n) != VoxelState::kUnknown) {
        const Vec3 c = world.center(world.unravel(n));
        REQUIRE(in_frustum(pose.position, pose.yaw, s, c));
        const auto ray = world.raycast(pose.position, c);
        for (std::size_t i = 0; i + 1 < ray.size(); ++i) REQUIRE(world.state(ray[i]) != VoxelState::kOccupied);
      }
    }
    CHECK(known >= known_before);
    known_before = known;
  }
}

TEST_CASE("esdf simple cases") {
  VoxelMap map(Vec3::Zero(), 0.1, Idx3(9, 9, 9), 10.0);
  map.fill(VoxelState::kFree);
  map.compute_esdf();
  for (std::size_t n = 0; n < map.size(); ++n) REQUIRE(map.esdf(n) == 10.0);

  map.set_state(Idx3(4, 4, 4), VoxelState::kOccupied);
  CHECK(map.esdf_dirty());
  CHECK_THROWS_AS(map.distance(Vec3(0.45, 0.45, 0.45)), Error);
  map.compute_esdf();
  CHECK(map.esdf(Idx3(5, 4, 4)) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(map.esdf(Idx3(4, 4, 4)) == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(map.esdf(Idx3(6, 6, 4)) == doctest::Approx(std::sqrt(8.0) * 0.1));
}

TEST_CASE("esdf equals brute force on random grids") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    VoxelMap map = random_map(rng, 32, 0.2);
    map.compute_esdf();
    const auto expect = oracle::brute_force_esdf(map);
    for (std::size_t n = 0; n < map.size(); ++n) REQUIRE(map.esdf(n) == expect[n]);
  }
  // Clamp engages on a sparse grid with a short clamp.
  VoxelMap sparse(Vec3::Zero(), 0.5, Idx3(20, 6, 6), 2.0);
  sparse.fill(VoxelState::kFree);
  sparse.set_state(Idx3(0, 0, 0), VoxelState::kOccupied);
  sparse.compute_esdf();
  const auto expect = oracle::brute_force_esdf(sparse);
  for (std::size_t n = 0; n < sparse.size(); ++n) REQUIRE(sparse.esdf(n) == expect[n]);
  CHECK(sparse.esdf(Idx3(19, 5, 5)) == 2.0);
}

TEST_CASE("trilinear distance and gradient") {
  std::mt19937_64 rng(5);
  VoxelMap map = random_map(rng, 16, 0.1, 0.2);
  map.compute_esdf();
  for (std::size_t n = 0; n < map.size(); n += 7) {
    const Idx3 idx = map.unravel(n);
    REQUIRE(map.distance(map.center(idx)) == map.esdf(n));
  }
  const Idx3 a(5, 6, 7), b(6, 6, 7);
  CHECK(map.distance(0.5 * (map.center(a) + map.center(b))) ==
        doctest::Approx(0.5 * (map.esdf(a) + map.esdf(b))).epsilon(1e-12));

  std::uniform_real_distribution<double> u(0.0, 1.0);
  int checked = 0;
  while (checked < 100) {
    Vec3 p = map.origin() + Vec3(u(rng), u(rng), u(rng)) * (16 * 0.2 - 0.2) + Vec3::Constant(0.1);
    const Vec3 g = (p - map.origin()) / 0.2 - Vec3::Constant(0.5);
    const Vec3 frac = g - g.array().floor().matrix();
    if ((frac.array() < 0.02).any() || (frac.array() > 0.98).any()) continue;
    const auto [d, grad] = map.distance_and_gradient(p);
    const double h = 0.2 / 100.0;
    Vec3 fd;
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = h;
      fd[k] = (map.distance(p + e) - map.distance(p - e)) / (2.0 * h);
    }
    const double scale = std::max(1e-3, grad.norm());
    REQUIRE((fd - grad).norm() / scale < 1e-6);
    ++checked;
  }
}

TEST_CASE("state queries") {
  VoxelMap map(Vec3::Zero(), 0.2, Idx3(10, 10, 10));
  CHECK(map.state_at(Vec3(1.0, 1.0, 1.0)) == VoxelState::kUnknown);
  map.set_state(Idx3(3, 4, 5), VoxelState::kOccupied);
  CHECK(map.state_at(map.center(Idx3(3, 4, 5))) == VoxelState::kOccupied);
  CHECK_THROWS_AS(map.state_at(Vec3(2.5, 0.0, 0.0)), Error);
  CHECK_THROWS_AS(VoxelMap(Vec3::Zero(), 0.0, Idx3(1, 1, 1)), Error);
  CHECK_THROWS_AS(VoxelMap(Vec3::Zero(), 0.1, Idx3(0, 1, 1)), Error);
}
