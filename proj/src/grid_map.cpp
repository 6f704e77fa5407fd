#include "replan/grid_map.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace replan {

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a <= 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSnap = 1e-10;

}  // namespace

void SensorModel::validate() const {
  if (!(horizontal_fov > 0.0 && horizontal_fov <= 2.0 * std::numbers::pi))
    raise(ErrorCode::kInvalidArgument, "horizontal fov must be in (0, 2pi]");
  if (!(vertical_fov > 0.0 && vertical_fov <= std::numbers::pi))
    raise(ErrorCode::kInvalidArgument, "vertical fov must be in (0, pi]");
  if (!(max_range >= 0.0)) raise(ErrorCode::kInvalidArgument, "sensor range must be non-negative");
}

bool in_frustum(const Vec3& sensor, double yaw, const SensorModel& s, const Vec3& point) {
  const Vec3 d = point - sensor;
  const double r2 = d.squaredNorm();
  if (r2 > s.max_range * s.max_range) return false;
  if (r2 == 0.0) return true;
  const double horiz = std::hypot(d.x(), d.y());
  if (std::abs(std::atan2(d.z(), horiz)) > 0.5 * s.vertical_fov) return false;
  if (s.horizontal_fov >= 2.0 * std::numbers::pi) return true;
  if (horiz == 0.0) return true;
  return std::abs(wrap_angle(std::atan2(d.y(), d.x()) - yaw)) <= 0.5 * s.horizontal_fov;
}

VoxelMap::VoxelMap(const Vec3& origin, double resolution, const Idx3& dims, double esdf_clamp)
    : origin_(origin), resolution_(resolution), dims_(dims), esdf_clamp_(esdf_clamp) {
  if (!(resolution > 0.0)) raise(ErrorCode::kInvalidArgument, "map resolution must be positive");
  if ((dims.array() < 1).any()) raise(ErrorCode::kInvalidArgument, "map dims must be >= 1");
  if (!(esdf_clamp > 0.0)) raise(ErrorCode::kInvalidArgument, "esdf clamp must be positive");
  const auto n = static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  states_.assign(n, VoxelState::kUnknown);
  esdf_.assign(n, esdf_clamp_);
}

bool VoxelMap::same_geometry(const VoxelMap& o) const {
  return origin_ == o.origin_ && resolution_ == o.resolution_ && dims_ == o.dims_;
}

bool VoxelMap::inside(const Vec3& p) const {
  const Vec3 hi = upper();
  return (p.array() >= origin_.array()).all() && (p.array() <= hi.array()).all();
}

bool VoxelMap::inside(const Idx3& idx) const {
  return (idx.array() >= 0).all() && (idx.array() < dims_.array()).all();
}

void VoxelMap::require_inside(const Vec3& p, const char* what) const {
  if (!inside(p)) {
    std::ostringstream os;
    os << what << " (" << p.x() << ", " << p.y() << ", " << p.z() << ") outside map";
    raise(ErrorCode::kBounds, os.str());
  }
}

Idx3 VoxelMap::index_of(const Vec3& p) const {
  Idx3 idx;
  for (int a = 0; a < 3; ++a) {
    const int i = static_cast<int>(std::floor((p[a] - origin_[a]) / resolution_));
    idx[a] = std::clamp(i, 0, dims_[a] - 1);
  }
  return idx;
}

Vec3 VoxelMap::center(const Idx3& idx) const {
  return origin_ + (idx.cast<double>().array() + 0.5).matrix() * resolution_;
}

Idx3 VoxelMap::unravel(std::size_t n) const {
  const auto nx = static_cast<std::size_t>(dims_.x());
  const auto ny = static_cast<std::size_t>(dims_.y());
  return Idx3(static_cast<int>(n % nx), static_cast<int>((n / nx) % ny), static_cast<int>(n / (nx * ny)));
}

void VoxelMap::set_state(const Idx3& idx, VoxelState s) { set_state(linear(idx), s); }

void VoxelMap::set_state(std::size_t n, VoxelState s) {
  if (states_[n] != s) {
    states_[n] = s;
    esdf_dirty_ = true;
  }
}

VoxelState VoxelMap::state_at(const Vec3& p) const {
  require_inside(p, "state query");
  return state(index_of(p));
}

void VoxelMap::fill(VoxelState s) {
  std::fill(states_.begin(), states_.end(), s);
  esdf_dirty_ = true;
}

void distance_transform_1d(std::vector<double>& f, std::vector<int>& v, std::vector<double>& z,
                           std::vector<double>& out) {
  const int n = static_cast<int>(f.size());
  v.resize(n);
  z.resize(n + 1);
  out.resize(n);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = -kInf;
    while (k >= 0) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), kInf);
  } else {
    int j = 0;
    for (int q = 0; q < n; ++q) {
      while (z[j + 1] < q) ++j;
      const double dq = q - v[j];
      out[q] = dq * dq + f[v[j]];
    }
  }
  f.swap(out);
}

namespace {

// Squared distance (in voxel units) from each voxel to the nearest voxel with is_site == true.
std::vector<double> squared_edt(const Idx3& dims, const std::vector<char>& is_site) {
  const int nx = dims.x(), ny = dims.y(), nz = dims.z();
  std::vector<double> g(is_site.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = is_site[i] ? 0.0 : kInf;

  std::vector<double> line, out, z;
  std::vector<int> v;
  auto pass = [&](int len, auto&& index_of_line_element, int outer_a, int outer_b) {
    line.resize(len);
    for (int b = 0; b < outer_b; ++b)
      for (int a = 0; a < outer_a; ++a) {
        for (int q = 0; q < len; ++q) line[q] = g[index_of_line_element(q, a, b)];
        distance_transform_1d(line, v, z, out);
        for (int q = 0; q < len; ++q) g[index_of_line_element(q, a, b)] = line[q];
      }
  };
  const auto at = [&](int x, int y, int zz) {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * zz);
  };
  pass(nx, [&](int q, int a, int b) { return at(q, a, b); }, ny, nz);
  pass(ny, [&](int q, int a, int b) { return at(a, q, b); }, nx, nz);
  pass(nz, [&](int q, int a, int b) { return at(a, b, q); }, nx, ny);
  return g;
}

}  // namespace

void VoxelMap::compute_esdf() {
  const std::size_t n = states_.size();
  std::vector<char> occupied(n), open(n);
  for (std::size_t i = 0; i < n; ++i) {
    occupied[i] = states_[i] == VoxelState::kOccupied;
    open[i] = !occupied[i];
  }
  const std::vector<double> to_obstacle = squared_edt(dims_, occupied);
  const std::vector<double> to_free = squared_edt(dims_, open);
  for (std::size_t i = 0; i < n; ++i) {
    if (occupied[i])
      esdf_[i] = -std::min(std::sqrt(to_free[i]) * resolution_, esdf_clamp_);
    else
      esdf_[i] = std::min(std::sqrt(to_obstacle[i]) * resolution_, esdf_clamp_);
  }
  esdf_dirty_ = false;
}

double VoxelMap::esdf(const Idx3& idx) const { return esdf(linear(idx)); }

double VoxelMap::esdf(std::size_t n) const {
  if (esdf_dirty_) raise(ErrorCode::kStaleMap, "distance field is stale; call compute_esdf()");
  return esdf_[n];
}

std::pair<double, Vec3> VoxelMap::distance_and_gradient(const Vec3& p) const {
  if (esdf_dirty_) raise(ErrorCode::kStaleMap, "distance field is stale; call compute_esdf()");
  require_inside(p, "distance query");

  int lo[3], hi[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const double g = (p[a] - origin_[a]) / resolution_ - 0.5;
    int i0 = static_cast<int>(std::floor(g));
    double f = g - i0;
    if (f < kSnap) {
      f = 0.0;
    } else if (f > 1.0 - kSnap) {
      f = 0.0;
      ++i0;
    }
    if (i0 < 0) {
      i0 = 0;
      f = 0.0;
    }
    if (i0 >= dims_[a] - 1) {
      i0 = dims_[a] - 1;
      f = 0.0;
    }
    lo[a] = i0;
    hi[a] = std::min(i0 + 1, dims_[a] - 1);
    frac[a] = f;
  }

  double c[2][2][2];
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz)
        c[dx][dy][dz] = esdf_[linear(Idx3(dx ? hi[0] : lo[0], dy ? hi[1] : lo[1], dz ? hi[2] : lo[2]))];

  const double fx = frac[0], fy = frac[1], fz = frac[2];
  // Interpolate along z, then y, then x.
  double cz[2][2];
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy) cz[dx][dy] = fz == 0.0 ? c[dx][dy][0] : (1.0 - fz) * c[dx][dy][0] + fz * c[dx][dy][1];
  double cy[2];
  for (int dx = 0; dx < 2; ++dx) cy[dx] = fy == 0.0 ? cz[dx][0] : (1.0 - fy) * cz[dx][0] + fy * cz[dx][1];
  const double value = fx == 0.0 ? cy[0] : (1.0 - fx) * cy[0] + fx * cy[1];

  Vec3 grad;
  grad.x() = (cy[1] - cy[0]) / resolution_;
  double dy_terms[2];
  for (int dx = 0; dx < 2; ++dx) dy_terms[dx] = cz[dx][1] - cz[dx][0];
  grad.y() = ((1.0 - fx) * dy_terms[0] + fx * dy_terms[1]) / resolution_;
  double dz_terms[2][2];
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy) dz_terms[dx][dy] = c[dx][dy][1] - c[dx][dy][0];
  grad.z() = ((1.0 - fx) * ((1.0 - fy) * dz_terms[0][0] + fy * dz_terms[0][1]) +
              fx * ((1.0 - fy) * dz_terms[1][0] + fy * dz_terms[1][1])) /
             resolution_;
  return {value, grad};
}

std::vector<Idx3> VoxelMap::raycast(const Vec3& from, const Vec3& to) const {
  std::vector<Idx3> out;
  walk(from, to, [&](const Idx3& idx) {
    out.push_back(idx);
    return true;
  });
  return out;
}

std::optional<Idx3> VoxelMap::first_occupied(const Vec3& from, const Vec3& to) const {
  std::optional<Idx3> hit;
  walk(from, to, [&](const Idx3& idx) {
    if (state(idx) == VoxelState::kOccupied) {
      hit = idx;
      return false;
    }
    return true;
  });
  return hit;
}

std::size_t sense(VoxelMap& belief, const VoxelMap& world, const Pose& pose, const SensorModel& sensor) {
  sensor.validate();
  if (!belief.same_geometry(world)) raise(ErrorCode::kInvalidArgument, "belief and world maps differ in geometry");
  if (!world.inside(pose.position)) raise(ErrorCode::kBounds, "sensor pose outside world");
  if (sensor.max_range <= 0.0) return 0;

  const double res = world.resolution();
  const Vec3 lo_p = (pose.position.array() - sensor.max_range).matrix();
  const Vec3 hi_p = (pose.position.array() + sensor.max_range).matrix();
  Idx3 lo, hi;
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::max(0, static_cast<int>(std::floor((lo_p[a] - world.origin()[a]) / res)));
    hi[a] = std::min(world.dims()[a] - 1, static_cast<int>(std::floor((hi_p[a] - world.origin()[a]) / res)));
  }

  std::size_t revealed = 0;
  for (int z = lo.z(); z <= hi.z(); ++z)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int x = lo.x(); x <= hi.x(); ++x) {
        const Idx3 target(x, y, z);
        const Vec3 c = world.center(target);
        if (!in_frustum(pose.position, pose.yaw, sensor, c)) continue;
        bool blocked = false;
        world.walk(pose.position, c, [&](const Idx3& idx) {
          if (idx == target) return false;
          if (world.state(idx) == VoxelState::kOccupied) {
            blocked = true;
            return false;
          }
          return true;
        });
        if (blocked) continue;
        const std::size_t n = world.linear(target);
        if (belief.state(n) == VoxelState::kUnknown) ++revealed;
        belief.set_state(n, world.state(n));
      }
  return revealed;
}

VoxelMap inflated(const VoxelMap& map, double radius, double unknown_radius) {
  if (radius < 0.0 || unknown_radius < 0.0) raise(ErrorCode::kInvalidArgument, "inflation radius must be >= 0");
  VoxelMap out = map;
  const double rf = radius / map.resolution() + 1e-9, ru = unknown_radius / map.resolution() + 1e-9;
  const int r = static_cast<int>(std::floor(std::max(rf, ru)));
  if (r == 0) return out;
  struct Offset {
    Idx3 d;
    bool any;  // within `radius`: applies to every state, else Unknown only
  };
  std::vector<Offset> kernel;
  for (int z = -r; z <= r; ++z)
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x) {
        const double n = Idx3(x, y, z).cast<double>().norm();
        if ((x || y || z) && (n <= rf || n <= ru)) kernel.push_back({Idx3(x, y, z), n <= rf});
      }
  const Idx3& dims = map.dims();
  for (std::size_t n = 0; n < map.size(); ++n) {
    if (map.state(n) != VoxelState::kOccupied) continue;
    const Idx3 c = map.unravel(n);
    for (const Offset& k : kernel) {
      const Idx3 q = c + k.d;
      if ((q.array() < 0).any() || (q.array() >= dims.array()).any()) continue;
      if (k.any || map.state(q) == VoxelState::kUnknown) out.set_state(q, VoxelState::kOccupied);
    }
  }
  return out;
}

}  // namespace replan
