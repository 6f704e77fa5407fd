#include "replan/yaw.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>

#include "replan/pgo.hpp"

namespace replan {

void IgConfig::validate() const {
  if (stride < 1) raise(ErrorCode::kConfig, "gain stride must be >= 1");
  if (w_l < 0.0 || w_s < 0.0) raise(ErrorCode::kConfig, "gain weights must be >= 0");
}

double wrap_pi(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

TrajectoryProfile::TrajectoryProfile(const UniformBSpline& traj, double t_from, double step) {
  const double a = traj.clamp_time(t_from);
  const int n = std::max(1, static_cast<int>(std::ceil((traj.t_end() - a) / step)));
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const Vec3 p = traj.evaluate(a + (traj.t_end() - a) * i / n);
    if (!pts_.empty()) s += (p - pts_.back()).norm();
    pts_.push_back(p);
    arc_.push_back(s);
  }
}

std::pair<double, double> TrajectoryProfile::distances(const Vec3& m) const {
  double best = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    const double d = (pts_[i] - m).squaredNorm();
    if (d < best) {
      best = d;
      k = i;
    }
  }
  return {std::sqrt(best), arc_[k]};
}

GainEvaluator::GainEvaluator(const VoxelMap& map, const SensorModel& sensor, const TrajectoryProfile& profile,
                             const IgConfig& cfg)
    : map_(map), sensor_(sensor), profile_(profile), cfg_(cfg) {
  cfg_.validate();
  sensor_.validate();
}

std::vector<std::size_t> GainEvaluator::candidates(const Vec3& position) const {
  if (!map_.inside(position)) raise(ErrorCode::kBounds, "gain position outside the map");
  const double r = sensor_.max_range;
  const Idx3 lo = map_.index_of((position - Vec3::Constant(r)).cwiseMax(map_.origin()));
  const Idx3 hi = map_.index_of((position + Vec3::Constant(r)).cwiseMin(map_.upper()));
  const int s = cfg_.stride;
  auto first = [s](int v) { return ((v + s - 1) / s) * s; };
  std::vector<std::size_t> out;
  for (int z = first(lo.z()); z <= hi.z(); z += s)
    for (int y = first(lo.y()); y <= hi.y(); y += s)
      for (int x = first(lo.x()); x <= hi.x(); x += s) {
        const Idx3 idx(x, y, z);
        if (map_.state(idx) != VoxelState::kUnknown) continue;
        if ((map_.center(idx) - position).squaredNorm() > r * r) continue;
        out.push_back(map_.linear(idx));
      }
  return out;
}

bool GainEvaluator::visible_from(const Vec3& position, std::size_t voxel) const {
  const Idx3 target = map_.unravel(voxel);
  bool ok = true;
  map_.walk(position, map_.center(target), [&](const Idx3& idx) {
    if (idx == target) return false;
    if (map_.state(idx) == VoxelState::kOccupied) ok = false;
    return ok;
  });
  return ok;
}

double GainEvaluator::weight(std::size_t voxel) const {
  const auto [dl, ds] = profile_.distances(map_.center(map_.unravel(voxel)));
  return std::exp(-cfg_.w_l * dl - cfg_.w_s * ds);
}

std::vector<double> GainEvaluator::gains_at(const Vec3& position, const std::vector<double>& yaws,
                                            bool memoize) const {
  const std::vector<std::size_t> cand = candidates(position);
  std::vector<signed char> vis(memoize ? cand.size() : 0, -1);
  std::vector<double> w(memoize ? cand.size() : 0, -1.0);
  std::vector<double> out;
  out.reserve(yaws.size());
  for (double yaw : yaws) {
    double g = 0.0;
    for (std::size_t k = 0; k < cand.size(); ++k) {
      const Vec3 c = map_.center(map_.unravel(cand[k]));
      if (!in_frustum(position, yaw, sensor_, c)) continue;
      bool v;
      if (memoize) {
        if (vis[k] < 0) vis[k] = visible_from(position, cand[k]) ? 1 : 0;
        v = vis[k] == 1;
      } else {
        v = visible_from(position, cand[k]);
      }
      if (!v) continue;
      double wk;
      if (memoize) {
        if (w[k] < 0.0) w[k] = weight(cand[k]);
        wk = w[k];
      } else {
        wk = weight(cand[k]);
      }
      g += wk;
    }
    out.push_back(g);
  }
  return out;
}

double information_gain(const VoxelMap& map, const Vec3& position, double yaw, const UniformBSpline& traj,
                        double t_from, const SensorModel& sensor, const IgConfig& cfg) {
  const TrajectoryProfile profile(traj, t_from, traj.knot_span() / 4.0);
  return GainEvaluator(map, sensor, profile, cfg).gain(position, yaw);
}

double yaw_path_cost(const YawGraph& g, const std::vector<int>& indices) {
  double c = 0.0;
  double prev = g.start;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double xi = g.angles[i][indices[i]];
    const double d = wrap_pi(xi - prev);
    c = c + (-g.gains[i][indices[i]] + g.mu * d * d);
    prev = xi;
  }
  return c;
}

YawPath search_yaw_graph(const YawGraph& g) {
  const int m = static_cast<int>(g.angles.size());
  if (m < 1) raise(ErrorCode::kInvalidArgument, "yaw graph needs at least one layer");
  // Node ids: 0 is the start; layer i (1-based), index j -> offset[i] + j.
  std::vector<int> offset(m + 1, 1);
  for (int i = 1; i < m; ++i) offset[i + 1] = offset[i] + static_cast<int>(g.angles[i - 1].size());
  const int total = offset[m] + static_cast<int>(g.angles[m - 1].size());
  double max_gain = 0.0;
  for (const auto& layer : g.gains)
    for (double v : layer) max_gain = std::max(max_gain, v);

  auto layer_of = [&](int id) {
    int i = m;
    while (i > 1 && id < offset[i]) --i;
    return i;
  };
  auto angle_of = [&](int id) { return id == 0 ? g.start : g.angles[layer_of(id) - 1][id - offset[layer_of(id)]]; };

  // Every path has exactly m edges, so adding max_gain per edge (potential layer * max_gain)
  // makes the priorities monotone without changing which path is shortest.
  std::vector<double> dist(total, std::numeric_limits<double>::infinity());
  std::vector<int> prev(total, -1);
  std::vector<char> done(total, 0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  dist[0] = 0.0;
  pq.push({0.0, 0});
  while (!pq.empty()) {
    const int u = pq.top().second;
    pq.pop();
    if (done[u]) continue;
    done[u] = 1;
    const int lu = u == 0 ? 0 : layer_of(u);
    if (lu == m) continue;
    const auto& angles = g.angles[lu];
    for (int j = 0; j < static_cast<int>(angles.size()); ++j) {
      const int v = offset[lu + 1] + j;
      const double d = wrap_pi(angles[j] - angle_of(u));
      const double nd = dist[u] + (-g.gains[lu][j] + g.mu * d * d);
      if (nd < dist[v] || (nd == dist[v] && prev[v] >= 0 && u < prev[v])) {
        dist[v] = nd;
        prev[v] = u;
        pq.push({nd + (lu + 1) * max_gain, v});
      }
    }
  }
  int best = -1;
  for (int j = 0; j < static_cast<int>(g.angles[m - 1].size()); ++j) {
    const int v = offset[m] + j;
    if (best < 0 || dist[v] < dist[best]) best = v;
  }
  YawPath path;
  path.indices.assign(m, 0);
  for (int v = best; v > 0; v = prev[v]) path.indices[layer_of(v) - 1] = v - offset[layer_of(v)];
  path.xi.push_back(g.start);
  for (int i = 0; i < m; ++i) path.xi.push_back(g.angles[i][path.indices[i]]);
  path.cost = yaw_path_cost(g, path.indices);
  return path;
}

double velocity_tracking_yaw(const UniformBSpline& traj, double t, double previous) {
  const Eigen::VectorXd v = traj.evaluate(traj.clamp_time(t), 1);
  if (std::hypot(v[0], v[1]) < 1e-3) return previous;
  return std::atan2(v[1], v[0]);
}

double yaw_objective(const Eigen::VectorXd& phi, double dt, double t0, const std::vector<double>& times,
                     const std::vector<double>& xi, const YawOptConfig& cfg, Eigen::VectorXd* grad) {
  const int n = static_cast<int>(phi.size());
  const int spans = n - 3;
  if (grad) grad->setZero(n);
  double cost = 0.0;
  const double dt3 = dt * dt * dt;
  for (int m = 0; m < spans; ++m) {
    const double j = (phi[m + 3] - 3.0 * phi[m + 2] + 3.0 * phi[m + 1] - phi[m]) / dt3;
    cost += j * j * dt;
    if (grad) {
      const double gj = 2.0 * j * dt / dt3;
      (*grad)[m + 3] += gj;
      (*grad)[m + 2] -= 3.0 * gj;
      (*grad)[m + 1] += 3.0 * gj;
      (*grad)[m] -= gj;
    }
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double s = (times[i] - t0) / dt;
    const int m = std::clamp(static_cast<int>(std::floor(s)), 0, spans - 1);
    const Eigen::VectorXd b = uniform_basis(3, std::clamp(s - m, 0.0, 1.0));
    const double e = b.dot(phi.segment(m, 4)) - xi[i];
    cost += cfg.gamma1 * e * e;
    if (grad) grad->segment(m, 4) += cfg.gamma1 * 2.0 * e * b;
  }
  for (int j = 0; j + 1 < n; ++j) {
    const double v = (phi[j + 1] - phi[j]) / dt;
    cost += cfg.gamma2 * penalty(cfg.dphi_max, std::abs(v));
    if (grad && std::abs(v) >= cfg.dphi_max) {
      // d/dv (dmax - |v|)^2 = -2 (dmax - |v|) sign(v)
      const double g = cfg.gamma2 * -2.0 * (cfg.dphi_max - std::abs(v)) * (v > 0 ? 1.0 : -1.0) / dt;
      (*grad)[j + 1] += g;
      (*grad)[j] -= g;
    }
  }
  for (int j = 0; j + 2 < n; ++j) {
    const double a = (phi[j + 2] - 2.0 * phi[j + 1] + phi[j]) / (dt * dt);
    cost += cfg.gamma2 * penalty(cfg.ddphi_max, std::abs(a));
    if (grad && std::abs(a) >= cfg.ddphi_max) {
      const double g = cfg.gamma2 * -2.0 * (cfg.ddphi_max - std::abs(a)) * (a > 0 ? 1.0 : -1.0) / (dt * dt);
      (*grad)[j + 2] += g;
      (*grad)[j + 1] -= 2.0 * g;
      (*grad)[j] += g;
    }
  }
  return cost;
}

UniformBSpline optimize_yaw_bspline(const std::vector<double>& xi, const std::vector<double>& times,
                                    const YawOptConfig& cfg, const std::optional<YawState>& start) {
  if (xi.size() != times.size() || xi.size() < 2) raise(ErrorCode::kInvalidArgument, "need >= 2 yaw waypoints");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) raise(ErrorCode::kInvalidArgument, "yaw waypoint times must increase");
  const double t0 = times.front(), total = times.back() - t0;
  const int spans = std::max(1, static_cast<int>(std::lround(total / cfg.knot_span)));
  const double dt = total / spans;
  const int n = spans + 3;

  // Start from the waypoints interpolated at the Greville abscissae.
  auto interp = [&](double t) {
    if (t <= times.front()) return xi.front();
    if (t >= times.back()) return xi.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times.begin());
    const double f = (t - times[k - 1]) / (times[k] - times[k - 1]);
    return xi[k - 1] + f * (xi[k] - xi[k - 1]);
  };
  Eigen::VectorXd phi(n);
  for (int i = 0; i < n; ++i) phi[i] = interp(t0 + (i - 1) * dt);
  int fixed = 0;
  if (start) {
    phi[0] = start->phi - dt * start->dphi + dt * dt * start->ddphi / 3.0;
    phi[1] = start->phi - dt * dt * start->ddphi / 6.0;
    phi[2] = start->phi + dt * start->dphi + dt * dt * start->ddphi / 3.0;
    fixed = 3;
  }

  const int free = n - fixed;
  if (free > 0) {
    Eigen::VectorXd full = phi, g;
    auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
      full.tail(free) = x;
      const double c = yaw_objective(full, dt, t0, times, xi, cfg, &g);
      grad = g.tail(free);
      return c;
    };
    const MinimizeResult r = minimize_lbfgs(fn, phi.tail(free), cfg.optimizer);
    phi.tail(free) = r.x;
  }
  UniformBSpline s(Eigen::MatrixXd(phi), 3, dt, t0);
  const double stretch = feasibility_stretch_factor(s, cfg.dphi_max, cfg.ddphi_max);
  return stretch > 1.0 ? s.time_stretched(stretch) : s;
}

YawPlan plan_yaw(const UniformBSpline& traj, double t_from, const VoxelMap& map, const SensorModel& sensor,
                 const YawState& current, const YawPlannerConfig& cfg) {
  if (cfg.layers < 1 || cfg.candidates < 1) raise(ErrorCode::kConfig, "yaw graph needs M >= 1 and J >= 1");
  YawPlan plan;
  const double a = traj.clamp_time(t_from);
  const TrajectoryProfile profile(traj, a, traj.knot_span() / 4.0);
  const GainEvaluator eval(map, sensor, profile, cfg.ig);

  YawGraph g;
  g.start = wrap_pi(current.phi);
  g.mu = cfg.mu;
  plan.times.push_back(a);
  double ref = current.phi;
  for (int i = 1; i <= cfg.layers; ++i) {
    const double t = a + (traj.t_end() - a) * i / cfg.layers;
    plan.times.push_back(t);
    ref = velocity_tracking_yaw(traj, t, ref);
    std::vector<double> angles;
    for (int j = 0; j <= cfg.candidates; ++j)
      angles.push_back(wrap_pi(ref - cfg.window + 2.0 * cfg.window * j / cfg.candidates));
    const Vec3 p = traj.evaluate(t);
    std::vector<double> gains(angles.size(), 0.0);
    if (map.inside(p)) gains = eval.gains_at(p, angles);
    g.angles.push_back(angles);
    g.gains.push_back(gains);
  }
  plan.gains = g.gains;
  plan.path = search_yaw_graph(g);

  // Unwrap onto the branch of the current yaw.
  std::vector<double> xi = {current.phi};
  for (std::size_t i = 1; i < plan.path.xi.size(); ++i)
    xi.push_back(xi.back() + wrap_pi(plan.path.xi[i] - plan.path.xi[i - 1]));
  if (plan.times.back() - plan.times.front() < 1e-6) {
    Eigen::MatrixXd q = Eigen::MatrixXd::Constant(4, 1, current.phi);
    plan.spline = UniformBSpline(q, 3, cfg.opt.knot_span, a);
    return plan;
  }
  plan.spline = optimize_yaw_bspline(xi, plan.times, cfg.opt, current);
  return plan;
}

}  // namespace replan
