#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <thread>

#include "replan/sim_harness.hpp"

namespace replan {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v + ",") {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

double to_double(const std::string& tok) {
  double x = 0.0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) raise(ErrorCode::kConfig, "bad number '" + tok + "'");
  return x;
}

std::uint64_t to_u64(const std::string& tok) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) raise(ErrorCode::kConfig, "bad seed '" + tok + "'");
  return x;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (std::filesystem::path(base_dir) / path).lexically_normal().string();
}

}  // namespace

SuiteConfig parse_suite(std::istream& is, const std::string& base_dir) {
  SuiteConfig s;
  std::string raw;
  int line = 0;
  std::vector<std::pair<std::string, std::string>> overrides;
  while (std::getline(is, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    raw = trim(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string::npos) raise(ErrorCode::kConfig, "suite line " + std::to_string(line) + ": expected key = value");
    const std::string k = trim(raw.substr(0, eq)), v = trim(raw.substr(eq + 1));
    try {
      if (k == "base") {
        s.base = load_config(resolve(base_dir, v));
      } else if (k == "densities") {
        for (const auto& tok : split_list(v)) s.densities.push_back(to_double(tok));
      } else if (k == "seeds") {
        if (const auto dots = v.find(".."); dots != std::string::npos) {
          const std::uint64_t a = to_u64(trim(v.substr(0, dots))), b = to_u64(trim(v.substr(dots + 2)));
          if (b < a) raise(ErrorCode::kConfig, "empty seed range");
          for (std::uint64_t x = a; x <= b; ++x) s.seeds.push_back(x);
        } else {
          for (const auto& tok : split_list(v)) s.seeds.push_back(to_u64(tok));
        }
      } else if (k == "strategies") {
        for (const auto& tok : split_list(v)) s.strategies.push_back(parse_strategy(tok));
      } else if (k == "scenes") {
        for (const auto& tok : split_list(v)) s.scenes.push_back(resolve(base_dir, tok));
      } else if (k == "jobs") {
        s.jobs = static_cast<int>(to_double(v));
      } else {
        overrides.emplace_back(k, v);
      }
    } catch (const Error& e) {
      raise(e.code(), "suite line " + std::to_string(line) + ": " + e.what());
    }
  }
  // Overrides apply after `base` regardless of their position in the file.
  for (const auto& [k, v] : overrides) s.base.set(k, v, base_dir);
  if (s.strategies.empty()) s.strategies = {parse_strategy("full"), parse_strategy("optimistic")};
  if (s.seeds.empty()) s.seeds = {0};
  if (s.densities.empty() && s.scenes.empty()) raise(ErrorCode::kConfig, "suite needs densities or scenes");
  for (double d : s.densities)
    if (d < 0.0) raise(ErrorCode::kConfig, "densities must be >= 0");
  s.base.validate();
  return s;
}

SuiteConfig load_suite(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::kIo, "cannot open suite " + path);
  return parse_suite(f, std::filesystem::path(path).parent_path().string());
}

std::vector<BenchCell> aggregate(const std::vector<BenchRun>& runs, const std::vector<Strategy>& order) {
  std::vector<std::string> worlds;
  for (const BenchRun& r : runs)
    if (std::find(worlds.begin(), worlds.end(), r.world) == worlds.end()) worlds.push_back(r.world);
  std::vector<BenchCell> cells;
  for (const std::string& w : worlds) {
    for (const Strategy& s : order) {
      BenchCell c;
      c.world = w;
      c.strategy = s.label;
      double dist = 0.0, time = 0.0, energy = 0.0, replans = 0.0;
      for (const BenchRun& r : runs) {
        if (r.world != w || r.strategy != s.label) continue;
        ++c.runs;
        if (!r.result.success) continue;
        ++c.successes;
        dist += r.result.flight_distance;
        time += r.result.flight_time;
        energy += r.result.energy;
        replans += r.result.replan_count;
      }
      if (c.runs == 0) continue;
      const double n = c.successes;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      c.mean_distance = n > 0 ? dist / n : nan;
      c.mean_time = n > 0 ? time / n : nan;
      c.mean_energy = n > 0 ? energy / n : nan;
      c.mean_replans = n > 0 ? replans / n : nan;
      cells.push_back(c);
    }
  }
  return cells;
}

BenchResult run_benchmark(const SuiteConfig& suite) {
  struct Job {
    ScenarioConfig cfg;
    BenchRun run;
  };
  std::vector<Job> jobs;
  for (double d : suite.densities)
    for (std::uint64_t seed : suite.seeds)
      for (const Strategy& s : suite.strategies) {
        Job j{suite.base, {}};
        j.cfg.generate = true;
        j.cfg.gen.density = d;
        j.cfg.seed = seed;
        j.cfg.risk_aware = s.risk_aware;
        j.cfg.active_yaw = s.active_yaw;
        j.run.world = "density=" + num(d);
        j.run.density = d;
        j.run.seed = seed;
        j.run.strategy = s.label;
        jobs.push_back(std::move(j));
      }
  for (const std::string& scene : suite.scenes)
    for (const Strategy& s : suite.strategies) {
      Job j{suite.base, {}};
      try {
        j.cfg.set("scene", scene);
      } catch (const Error& e) {
        j.run.error = e.what();
      }
      j.cfg.seed = 0;
      j.cfg.risk_aware = s.risk_aware;
      j.cfg.active_yaw = s.active_yaw;
      j.run.world = std::filesystem::path(scene).filename().string();
      j.run.density = std::numeric_limits<double>::quiet_NaN();
      j.run.strategy = s.label;
      jobs.push_back(std::move(j));
    }

  const int workers = std::max(
      1, std::min<int>(static_cast<int>(jobs.size()),
                       suite.jobs > 0 ? suite.jobs : static_cast<int>(std::thread::hardware_concurrency())));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      Job& j = jobs[i];
      if (!j.run.error.empty()) continue;
      try {
        j.run.result = run_scenario(j.cfg);
      } catch (const std::exception& e) {
        j.run.error = e.what();
        j.run.result = ScenarioResult{};
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  BenchResult out;
  std::vector<double> all_ms;
  for (Job& j : jobs) {
    all_ms.insert(all_ms.end(), j.run.result.replan_ms.begin(), j.run.result.replan_ms.end());
    out.runs.push_back(std::move(j.run));
  }
  out.cells = aggregate(out.runs, suite.strategies);
  out.median_replan_ms = median(all_ms);
  return out;
}

void write_bench_outputs(const std::string& dir, const BenchResult& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) raise(ErrorCode::kIo, "cannot create output directory " + dir);
  const std::filesystem::path base(dir);
  auto open = [&](const char* name) {
    std::ofstream f(base / name);
    if (!f) raise(ErrorCode::kIo, std::string("cannot write ") + name);
    return f;
  };
  {
    auto f = open("runs.csv");
    f << "world,density,seed,strategy,success,failure_cause,flight_distance,flight_time,energy,replan_count,"
         "replan_failures,emergency_stops,collisions,min_clearance,error\n";
    for (const BenchRun& b : r.runs) {
      const ScenarioResult& x = b.result;
      std::string err = b.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      f << b.world << "," << (std::isnan(b.density) ? "" : num(b.density)) << "," << b.seed << "," << b.strategy
        << "," << (x.success ? 1 : 0) << "," << (b.error.empty() ? to_string(x.cause) : "error") << ","
        << num(x.flight_distance) << "," << num(x.flight_time) << "," << num(x.energy) << "," << x.replan_count
        << "," << x.replan_failures << "," << x.emergency_stops << "," << x.collisions << ","
        << num(x.min_clearance) << "," << err << "\n";
    }
  }
  {
    auto f = open("summary.csv");
    f << "world,strategy,runs,successes,mean_flight_distance,mean_flight_time,mean_energy,mean_replan_count\n";
    for (const BenchCell& c : r.cells)
      f << c.world << "," << c.strategy << "," << c.runs << "," << c.successes << "," << num(c.mean_distance) << ","
        << num(c.mean_time) << "," << num(c.mean_energy) << "," << num(c.mean_replans) << "\n";
  }
  {
    nlohmann::ordered_json j;
    auto jnum = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    for (const BenchCell& c : r.cells)
      j["cells"].push_back({{"world", c.world},
                            {"strategy", c.strategy},
                            {"runs", c.runs},
                            {"successes", c.successes},
                            {"mean_flight_distance", jnum(c.mean_distance)},
                            {"mean_flight_time", jnum(c.mean_time)},
                            {"mean_energy", jnum(c.mean_energy)},
                            {"mean_replan_count", jnum(c.mean_replans)}});
    for (const BenchRun& b : r.runs)
      j["runs"].push_back({{"world", b.world},
                           {"seed", b.seed},
                           {"strategy", b.strategy},
                           {"success", b.result.success},
                           {"failure_cause", b.error.empty() ? to_string(b.result.cause) : "error"},
                           {"emergency_stops", b.result.emergency_stops},
                           {"collisions", b.result.collisions}});
    auto f = open("result.json");
    f << j.dump(2) << "\n";
  }
  {
    nlohmann::ordered_json j;
    j["median_replan_ms"] = std::isfinite(r.median_replan_ms) ? nlohmann::json(r.median_replan_ms) : nullptr;
    for (const BenchRun& b : r.runs) {
      const double m = median(b.result.replan_ms);
      j["runs"].push_back({{"world", b.world},
                           {"seed", b.seed},
                           {"strategy", b.strategy},
                           {"median_replan_ms", std::isfinite(m) ? nlohmann::json(m) : nullptr},
                           {"replan_ms", b.result.replan_ms}});
    }
    auto f = open("timing.json");
    f << j.dump(2) << "\n";
  }
}

}  // namespace replan
