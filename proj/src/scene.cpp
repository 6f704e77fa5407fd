#include "replan/scene.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace replan {

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string vec(const Vec3& v) { return num(v.x()) + " " + num(v.y()) + " " + num(v.z()); }

[[noreturn]] void parse_error(int line, const std::string& msg) {
  raise(ErrorCode::kParse, "scene line " + std::to_string(line) + ": " + msg);
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) raise(ErrorCode::kParse, "truncated voxel dump");
  return v;
}

}  // namespace

Obstacle Obstacle::box(const Vec3& lo, const Vec3& hi) {
  if ((hi.array() <= lo.array()).any()) raise(ErrorCode::kInvalidArgument, "box needs lo < hi");
  Obstacle o;
  o.kind = Kind::kBox;
  o.lo = lo;
  o.hi = hi;
  return o;
}

Obstacle Obstacle::cylinder(double cx, double cy, double radius, double z0, double z1) {
  if (!(radius > 0.0) || !(z1 > z0)) raise(ErrorCode::kInvalidArgument, "cylinder needs radius > 0 and z0 < z1");
  Obstacle o;
  o.kind = Kind::kCylinder;
  o.lo = Vec3(cx, cy, z0);
  o.hi = Vec3(cx, cy, z1);
  o.radius = radius;
  return o;
}

bool Obstacle::contains(const Vec3& p) const {
  if (p.z() < lo.z() || p.z() > hi.z()) return false;
  if (kind == Kind::kBox) return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  return std::hypot(p.x() - lo.x(), p.y() - lo.y()) <= radius;
}

double Obstacle::footprint_distance(double x, double y) const {
  if (kind == Kind::kCylinder) return std::max(0.0, std::hypot(x - lo.x(), y - lo.y()) - radius);
  const double dx = std::max({lo.x() - x, 0.0, x - hi.x()});
  const double dy = std::max({lo.y() - y, 0.0, y - hi.y()});
  return std::hypot(dx, dy);
}

std::vector<Vec3> Scene::reference() const {
  std::vector<Vec3> r = {start};
  r.insert(r.end(), waypoints.begin(), waypoints.end());
  r.push_back(goal);
  return r;
}

void Scene::validate() const {
  if (!(resolution > 0.0)) raise(ErrorCode::kConfig, "scene resolution must be positive");
  if ((hi.array() - lo.array() < resolution).any()) raise(ErrorCode::kConfig, "scene bounds are empty");
  auto in = [&](const Vec3& p) { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); };
  if (!in(start) || !in(goal)) raise(ErrorCode::kConfig, "start and goal must lie inside the bounds");
  if ((start - goal).norm() < 1e-9) raise(ErrorCode::kConfig, "goal must differ from start");
}

Scene parse_scene(std::istream& is) {
  Scene s;
  s.waypoints.clear();
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string kw;
    if (!(ls >> kw)) continue;
    std::vector<double> v;
    for (std::string tok; ls >> tok;) {
      double x = 0.0;
      const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) parse_error(line, "bad number '" + tok + "'");
      v.push_back(x);
    }
    auto need = [&](std::size_t n) {
      if (v.size() != n) parse_error(line, kw + " expects " + std::to_string(n) + " numbers");
    };
    try {
      if (kw == "bounds") {
        need(6);
        s.lo = Vec3(v[0], v[1], v[2]);
        s.hi = Vec3(v[3], v[4], v[5]);
      } else if (kw == "resolution") {
        need(1);
        s.resolution = v[0];
      } else if (kw == "start") {
        need(3);
        s.start = Vec3(v[0], v[1], v[2]);
      } else if (kw == "goal") {
        need(3);
        s.goal = Vec3(v[0], v[1], v[2]);
      } else if (kw == "waypoint") {
        need(3);
        s.waypoints.emplace_back(v[0], v[1], v[2]);
      } else if (kw == "box") {
        need(6);
        s.obstacles.push_back(Obstacle::box(Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])));
      } else if (kw == "cylinder") {
        need(5);
        s.obstacles.push_back(Obstacle::cylinder(v[0], v[1], v[2], v[3], v[4]));
      } else {
        parse_error(line, "unknown statement '" + kw + "'");
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kParse) throw;
      parse_error(line, e.what());
    }
  }
  s.validate();
  return s;
}

Scene load_scene(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::kIo, "cannot open scene file " + path);
  return parse_scene(f);
}

void write_scene(std::ostream& os, const Scene& s) {
  os << "bounds " << vec(s.lo) << " " << vec(s.hi) << "\n";
  os << "resolution " << num(s.resolution) << "\n";
  os << "start " << vec(s.start) << "\n";
  for (const Vec3& w : s.waypoints) os << "waypoint " << vec(w) << "\n";
  os << "goal " << vec(s.goal) << "\n";
  for (const Obstacle& o : s.obstacles) {
    if (o.kind == Obstacle::Kind::kBox)
      os << "box " << vec(o.lo) << " " << vec(o.hi) << "\n";
    else
      os << "cylinder " << num(o.lo.x()) << " " << num(o.lo.y()) << " " << num(o.radius) << " " << num(o.lo.z())
         << " " << num(o.hi.z()) << "\n";
  }
}

void save_scene(const std::string& path, const Scene& scene) {
  std::ofstream f(path);
  if (!f) raise(ErrorCode::kIo, "cannot write " + path);
  write_scene(f, scene);
  if (!f) raise(ErrorCode::kIo, "write failed for " + path);
}

VoxelMap rasterize(const Scene& scene) {
  scene.validate();
  Idx3 dims;
  for (int a = 0; a < 3; ++a)
    dims[a] = std::max(1, static_cast<int>(std::lround((scene.hi[a] - scene.lo[a]) / scene.resolution)));
  VoxelMap map(scene.lo, scene.resolution, dims);
  map.fill(VoxelState::kFree);
  for (const Obstacle& o : scene.obstacles) {
    // Only visit the obstacle's bounding box.
    const Vec3 blo = o.kind == Obstacle::Kind::kBox ? o.lo : Vec3(o.lo.x() - o.radius, o.lo.y() - o.radius, o.lo.z());
    const Vec3 bhi = o.kind == Obstacle::Kind::kBox ? o.hi : Vec3(o.hi.x() + o.radius, o.hi.y() + o.radius, o.hi.z());
    const Idx3 a = map.index_of(blo), b = map.index_of(bhi);
    for (int z = a.z(); z <= b.z(); ++z)
      for (int y = a.y(); y <= b.y(); ++y)
        for (int x = a.x(); x <= b.x(); ++x) {
          const Idx3 idx(x, y, z);
          if (o.contains(map.center(idx))) map.set_state(idx, VoxelState::kOccupied);
        }
  }
  return map;
}

void write_vox(std::ostream& os, const VoxelMap& map) {
  os.write("RPVX", 4);
  put<std::uint32_t>(os, 1);
  for (int a = 0; a < 3; ++a) put<double>(os, map.origin()[a]);
  put<double>(os, map.resolution());
  for (int a = 0; a < 3; ++a) put<std::int32_t>(os, map.dims()[a]);
  static_assert(sizeof(VoxelState) == 1);
  os.write(reinterpret_cast<const char*>(map.states().data()), static_cast<std::streamsize>(map.size()));
}

VoxelMap read_vox(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RPVX", 4) != 0) raise(ErrorCode::kParse, "not a voxel dump");
  if (get<std::uint32_t>(is) != 1) raise(ErrorCode::kParse, "unsupported voxel dump version");
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = get<double>(is);
  const double res = get<double>(is);
  Idx3 dims;
  for (int a = 0; a < 3; ++a) dims[a] = get<std::int32_t>(is);
  if (!(res > 0.0) || (dims.array() < 1).any() || dims.cast<double>().prod() > 1e9)
    raise(ErrorCode::kParse, "bad voxel dump header");
  VoxelMap map(origin, res, dims);
  std::vector<std::uint8_t> raw(map.size());
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    raise(ErrorCode::kParse, "truncated voxel dump");
  for (std::size_t n = 0; n < raw.size(); ++n) {
    if (raw[n] > 2) raise(ErrorCode::kParse, "bad voxel state in dump");
    map.set_state(n, static_cast<VoxelState>(raw[n]));
  }
  return map;
}

void save_vox(const std::string& path, const VoxelMap& map) {
  std::ofstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::kIo, "cannot write " + path);
  write_vox(f, map);
  if (!f) raise(ErrorCode::kIo, "write failed for " + path);
}

VoxelMap load_vox(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::kIo, "cannot open voxel dump " + path);
  return read_vox(f);
}

int MapGenConfig::count() const { return static_cast<int>(std::lround(density * area())); }

void MapGenConfig::validate() const {
  if (!(density >= 0.0)) raise(ErrorCode::kConfig, "density must be >= 0");
  if (!(area_x1 > area_x0) || !(area_y1 > area_y0)) raise(ErrorCode::kConfig, "obstacle area is empty");
  if (!(box_min > 0.0) || box_max < box_min) raise(ErrorCode::kConfig, "bad box size range");
  if (!(radius_min > 0.0) || radius_max < radius_min) raise(ErrorCode::kConfig, "bad cylinder radius range");
  if (cylinder_fraction < 0.0 || cylinder_fraction > 1.0) raise(ErrorCode::kConfig, "cylinder fraction outside [0, 1]");
  if (clear_radius < 0.0 || max_retries < 1) raise(ErrorCode::kConfig, "bad clearance or retry count");
}

Scene generate_scene(const MapGenConfig& cfg, std::uint64_t seed, const Scene& base) {
  cfg.validate();
  Scene s = base;
  s.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };
  const int n = cfg.count();
  for (int k = 0; k < n; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const double cx = uniform(cfg.area_x0, cfg.area_x1);
      const double cy = uniform(cfg.area_y0, cfg.area_y1);
      Obstacle o;
      if (u01(rng) < cfg.cylinder_fraction) {
        o = Obstacle::cylinder(cx, cy, uniform(cfg.radius_min, cfg.radius_max), s.lo.z(), s.hi.z());
      } else {
        const double hx = 0.5 * uniform(cfg.box_min, cfg.box_max), hy = 0.5 * uniform(cfg.box_min, cfg.box_max);
        o = Obstacle::box(Vec3(cx - hx, cy - hy, s.lo.z()), Vec3(cx + hx, cy + hy, s.hi.z()));
      }
      placed = o.footprint_distance(s.start.x(), s.start.y()) > cfg.clear_radius &&
               o.footprint_distance(s.goal.x(), s.goal.y()) > cfg.clear_radius;
      if (placed) s.obstacles.push_back(o);
    }
    if (!placed) raise(ErrorCode::kGeneration, "could not place obstacle " + std::to_string(k) + " after retries");
  }
  return s;
}

}  // namespace replan
