/* Copyright 2026 The rpoc Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "rpoc/config.hpp"

namespace rpoc {

// All floating-point output goes through one formatter: 17 significant
// digits round-trip doubles exactly, which the resume path and the
// schedule-reload path both rely on.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Quantile with linear interpolation on the ascending order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = q * double(v.size() - 1);
  const auto lo = size_t(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + (h - double(lo)) * (v[lo + 1] - v[lo]);
}

inline void write_schedule_csv(const std::filesystem::path& path,
                               const ControlSchedule& sched,
                               const std::vector<ControlChannel>& channels) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << "step_index,t_start_us";
  for (const auto& ch : channels) out << ",u_" << ch.name;
  out << "\n";
  for (Eigen::Index k = 0; k < sched.n_steps(); ++k) {
    out << k << ',' << fmt_g17(double(k) * sched.dt);
    for (Eigen::Index i = 0; i < sched.n_channels(); ++i)
      out << ',' << fmt_g17(sched.amplitudes(k, i));
    out << "\n";
  }
  out.flush();
  if (!out)
    throw Error(ErrorCode::io_failure, "short write to " + path.string());
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw Error(ErrorCode::io_failure, "bad number '" + s + "' in " + where);
  return v;
}

}  // namespace detail

// Inverse of write_schedule_csv. dt comes from the second row's start time;
// a one-step schedule needs the fallback.
inline ControlSchedule load_schedule_csv(const std::string& path,
                                         double dt_fallback = 0.0) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::io_failure, "empty schedule file " + path);
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "step_index" ||
      header[1] != "t_start_us")
    throw Error(ErrorCode::io_failure, "unrecognized schedule header in " + path);
  const auto n_channels = Eigen::Index(header.size() - 2);

  std::vector<double> t_start;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = detail::split_csv_line(line);
    if (Eigen::Index(cols.size()) != n_channels + 2)
      throw Error(ErrorCode::io_failure, "ragged schedule row in " + path);
    t_start.push_back(detail::parse_double(cols[1], path));
    std::vector<double> u;
    for (Eigen::Index i = 0; i < n_channels; ++i)
      u.push_back(detail::parse_double(cols[size_t(i) + 2], path));
    rows.push_back(std::move(u));
  }
  if (rows.empty())
    throw Error(ErrorCode::io_failure, "schedule file has no rows: " + path);

  ControlSchedule sched;
  sched.dt = rows.size() >= 2 ? t_start[1] - t_start[0] : dt_fallback;
  if (!(sched.dt > 0.0))
    throw Error(ErrorCode::bad_config,
                "cannot recover dt from " + path + "; pass a fallback");
  sched.amplitudes.resize(Eigen::Index(rows.size()), n_channels);
  for (size_t k = 0; k < rows.size(); ++k)
    for (Eigen::Index i = 0; i < n_channels; ++i)
      sched.amplitudes(Eigen::Index(k), i) = rows[k][size_t(i)];
  return sched;
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<double>& history) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << "iteration,objective\n";
  for (size_t i = 0; i < history.size(); ++i)
    out << i << ',' << fmt_g17(history[i]) << "\n";
  out.flush();
  if (!out)
    throw Error(ErrorCode::io_failure, "short write to " + path.string());
}

inline void write_json_atomic(const std::filesystem::path& path,
                              const nlohmann::json& doc) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out)
      throw Error(ErrorCode::io_failure, "cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
    out.flush();
    if (!out)
      throw Error(ErrorCode::io_failure, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct TaskResult {
  bool ok = false;
  std::string error;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double metric = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> final_yields;
  int iterations = 0;
  std::string termination;
  std::vector<double> history;
  Eigen::MatrixXd amplitudes;
};

struct RunOutcome {
  std::string out_dir;
  std::string csv_path;
  std::string kind;
  int total_tasks = 0;
  int failed_tasks = 0;
  double wall_time_s = 0.0;
};

namespace detail {

// One sweep point: a field (minimize-yield) carries a single prepared
// system; a contrast point carries the orientation pair plus both contrast
// directions as ready-made problems.
struct ExperimentPoint {
  std::unique_ptr<PreparedSystem> sys_a;
  std::unique_ptr<PreparedSystem> sys_b;
  std::unique_ptr<ControlProblem> problem;
  std::unique_ptr<ControlProblem> problem_swapped;
  double uncontrolled = std::numeric_limits<double>::quiet_NaN();
};

struct TaskSpec {
  std::string id;
  size_t point = 0;
  int variant = 0;  // 0: minimize / shared contrast, 1: swapped contrast
  int rep = 0;
  std::uint64_t seed = 0;
};

inline void for_each_index(size_t n, int threads,
                           const std::function<void(size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const size_t nt = std::min(size_t(threads), n);
  for (size_t t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

inline nlohmann::json result_to_json(const TaskResult& r) {
  nlohmann::json j;
  j["ok"] = r.ok;
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["objective"] = r.objective;
  j["metric"] = r.metric;
  j["final_yields"] = r.final_yields;
  j["iterations"] = r.iterations;
  j["termination"] = r.termination;
  return j;
}

inline TaskResult result_from_json(const nlohmann::json& j) {
  TaskResult r;
  r.ok = j.value("ok", false);
  if (!r.ok) {
    r.error = j.value("error", std::string("unknown failure"));
    return r;
  }
  r.objective = j.at("objective").get<double>();
  r.metric = j.at("metric").get<double>();
  r.final_yields = j.at("final_yields").get<std::vector<double>>();
  r.iterations = j.at("iterations").get<int>();
  r.termination = j.at("termination").get<std::string>();
  return r;
}

inline RunOutcome run_impl(const ExperimentConfig& c,
                           const std::filesystem::path& root,
                           nlohmann::json manifest, int cli_threads,
                           std::ostream* log) {
  const auto wall_start = std::chrono::steady_clock::now();
  if (c.objective == ObjectiveKind::maximize_yield)
    throw Error(ErrorCode::bad_config,
                "maximize-yield parses but has no sweep driver; use "
                "minimize-yield or a contrast objective");
  const bool contrast = c.is_contrast();
  const int threads = effective_threads(cli_threads, c.threads);

  std::filesystem::create_directories(root / "schedules");
  std::filesystem::create_directories(root / "history");
  const std::filesystem::path manifest_path = root / "manifest.json";
  const char* csv_name = contrast ? "anisotropy.csv" : "sweep.csv";

  auto log_line = [&](const std::string& s) {
    if (log) *log << "[rpoc] " << s << std::endl;
  };

  // Prepared systems and problems, one bundle per sweep point.
  std::vector<ExperimentPoint> points;
  if (contrast) {
    for (size_t p = 0; p < c.j_sweep.size(); ++p) {
      const SpinSystem sys = build_spin_system(c, c.j_sweep[p]);
      ExperimentPoint pt;
      pt.sys_a = std::make_unique<PreparedSystem>(
          sys, c.orientations.omega_z, c.k_b, c.k_f, c.noise, c.family,
          c.amplitude);
      pt.sys_b = std::make_unique<PreparedSystem>(
          sys, c.orientations.omega_x, c.k_b, c.k_f, c.noise, c.family,
          c.amplitude);
      const VecCd rho0 = singlet_born_state(singlet_projector(sys.reg));
      pt.problem = std::make_unique<ControlProblem>(
          std::vector<ObjectiveTerm>{{pt.sys_a.get(), 1.0},
                                     {pt.sys_b.get(), -1.0}},
          rho0, c.n_steps, c.dt, c.horizon, c.taylor, c.costate,
          c.gradient_stride);
      pt.problem_swapped = std::make_unique<ControlProblem>(
          std::vector<ObjectiveTerm>{{pt.sys_b.get(), 1.0},
                                     {pt.sys_a.get(), -1.0}},
          rho0, c.n_steps, c.dt, c.horizon, c.taylor, c.costate,
          c.gradient_stride);
      points.push_back(std::move(pt));
      log_line("prepared contrast point " + std::to_string(p) +
               " (j_ex = " + fmt_g17(c.j_sweep[p] / kTwoPi) + " MHz)");
    }
  } else {
    const SpinSystem sys = build_spin_system(c);
    for (size_t p = 0; p < c.field_sweep.size(); ++p) {
      ExperimentPoint pt;
      pt.sys_a = std::make_unique<PreparedSystem>(
          sys, c.field_sweep[p], c.k_b, c.k_f, c.noise, c.family, c.amplitude);
      pt.problem = std::make_unique<ControlProblem>(
          std::vector<ObjectiveTerm>{{pt.sys_a.get(), -1.0}},
          singlet_born_state(singlet_projector(sys.reg)), c.n_steps, c.dt,
          c.horizon, c.taylor, c.costate, c.gradient_stride);
      points.push_back(std::move(pt));
      log_line("prepared field point " + std::to_string(p) +
               " (B0 = " + fmt_g17(c.field_sweep[p].b0) + " mT)");
    }
  }
  const auto n_channels = points[0].problem->n_channels();
  const ControlSchedule zero_sched{
      c.dt, Eigen::MatrixXd::Zero(c.n_steps, n_channels)};

  // Control-free baseline per point. Deterministic, so a resume may reuse
  // the stored values verbatim.
  bool have_uncontrolled = false;
  if (manifest.contains("uncontrolled") &&
      manifest["uncontrolled"].is_array() &&
      manifest["uncontrolled"].size() == points.size()) {
    have_uncontrolled = true;
    for (size_t p = 0; p < points.size(); ++p) {
      const auto& v = manifest["uncontrolled"][p];
      if (!v.is_number()) {
        have_uncontrolled = false;
        break;
      }
      points[p].uncontrolled = v.get<double>();
    }
  }
  if (!have_uncontrolled) {
    for (size_t p = 0; p < points.size(); ++p) {
      points[p].uncontrolled =
          contrast ? points[p].problem->evaluate(zero_sched)
                   : points[p].problem->term_yields(zero_sched)[0];
      log_line("point " + std::to_string(p) +
               " uncontrolled = " + fmt_g17(points[p].uncontrolled));
    }
  }

  // Deterministic task enumeration; the seed of task k depends only on the
  // master seed and k, never on which thread picks it up.
  std::vector<TaskSpec> tasks;
  {
    std::uint64_t idx = 0;
    for (size_t p = 0; p < points.size(); ++p)
      for (int variant = 0; variant < (contrast ? 2 : 1); ++variant)
        for (int rep = 0; rep < c.replications; ++rep) {
          TaskSpec t;
          t.point = p;
          t.variant = variant;
          t.rep = rep;
          t.seed = task_seed(c.seed, idx++);
          t.id = contrast ? ("j" + std::to_string(p) +
                             (variant ? "_swapped_r" : "_shared_r") +
                             std::to_string(rep))
                          : ("p" + std::to_string(p) + "_r" +
                             std::to_string(rep));
          tasks.push_back(std::move(t));
        }
  }

  // Reload finished tasks from the manifest; a completed entry only counts
  // if its artifact files survived.
  std::vector<TaskResult> results(tasks.size());
  std::vector<char> loaded(tasks.size(), 0);
  {
    std::set<std::string> done;
    if (manifest.contains("completed") && manifest["completed"].is_array())
      for (const auto& e : manifest["completed"])
        if (e.is_string()) done.insert(e.get<std::string>());
    const nlohmann::json old_results =
        manifest.contains("results") ? manifest["results"]
                                     : nlohmann::json::object();
    manifest["completed"] = nlohmann::json::array();
    manifest["results"] = nlohmann::json::object();
    for (size_t i = 0; i < tasks.size(); ++i) {
      const std::string& id = tasks[i].id;
      if (!done.count(id) || !old_results.contains(id)) continue;
      TaskResult r = result_from_json(old_results.at(id));
      if (r.ok && (!std::filesystem::exists(root / "schedules" / (id + ".csv")) ||
                   !std::filesystem::exists(root / "history" / (id + ".csv"))))
        continue;
      results[i] = std::move(r);
      loaded[i] = 1;
      manifest["results"][id] = old_results.at(id);
      manifest["completed"].push_back(id);
    }
  }

  const double prior_wall = manifest.contains("wall_time_s") &&
                                    manifest["wall_time_s"].is_number()
                                ? manifest["wall_time_s"].get<double>()
                                : 0.0;
  manifest["schema_version"] = 1;
  manifest["kind"] = contrast ? "anisotropy" : "field-sweep";
  manifest["config"] = c.raw;
  manifest["total_tasks"] = tasks.size();
  {
    nlohmann::json seeds = nlohmann::json::object();
    for (const auto& t : tasks) seeds[t.id] = t.seed;
    manifest["seeds"] = seeds;
  }
  {
    nlohmann::json unc = nlohmann::json::array();
    for (const auto& pt : points) unc.push_back(pt.uncontrolled);
    manifest["uncontrolled"] = unc;
  }
  write_json_atomic(manifest_path, manifest);

  std::vector<size_t> pending;
  for (size_t i = 0; i < tasks.size(); ++i)
    if (!loaded[i]) pending.push_back(i);
  log_line(std::to_string(pending.size()) + " of " +
           std::to_string(tasks.size()) + " tasks to run on " +
           std::to_string(threads) + " thread(s)");

  std::mutex writer;
  for_each_index(pending.size(), threads, [&](size_t k) {
    const size_t i = pending[k];
    const TaskSpec& t = tasks[i];
    TaskResult r;
    try {
      const ControlProblem& prob = t.variant
                                       ? *points[t.point].problem_swapped
                                       : *points[t.point].problem;
      OptimizerConfig oc = c.optimizer;
      oc.rng_seed = t.seed;
      const OptimizationResult res = optimize(prob, oc);
      r.ok = true;
      r.history = res.objective_history;
      r.iterations = res.iterations_used;
      r.termination = termination_name(res.termination);
      r.objective = r.history.back();
      r.metric = contrast ? r.objective : -r.objective;
      r.final_yields = prob.term_yields(res.schedule);
      r.amplitudes = res.schedule.amplitudes;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }

    std::lock_guard<std::mutex> lock(writer);
    if (r.ok) {
      ControlSchedule sched{c.dt, r.amplitudes};
      write_schedule_csv(root / "schedules" / (t.id + ".csv"), sched,
                         points[t.point].problem->channels());
      write_history_csv(root / "history" / (t.id + ".csv"), r.history);
      log_line("task " + t.id + ": metric = " + fmt_g17(r.metric) + ", " +
               std::to_string(r.iterations) + " iterations (" +
               r.termination + ")");
    } else {
      log_line("task " + t.id + " FAILED: " + r.error);
    }
    manifest["results"][t.id] = result_to_json(r);
    manifest["completed"].push_back(t.id);
    write_json_atomic(manifest_path, manifest);
    results[i] = std::move(r);
  });

  // Sweep summary CSV.
  const std::filesystem::path csv_path = root / csv_name;
  {
    std::ofstream out(csv_path);
    if (!out)
      throw Error(ErrorCode::io_failure, "cannot write " + csv_path.string());
    if (contrast) {
      out << "j_ex_mhz,delta_s_uncontrolled,delta_s_best,delta_s_swapped_best\n";
      for (size_t p = 0; p < points.size(); ++p) {
        double best_shared = std::numeric_limits<double>::quiet_NaN();
        double best_swapped = std::numeric_limits<double>::quiet_NaN();
        for (size_t i = 0; i < tasks.size(); ++i) {
          if (tasks[i].point != p || !results[i].ok) continue;
          double& slot = tasks[i].variant ? best_swapped : best_shared;
          if (std::isnan(slot) || results[i].metric > slot)
            slot = results[i].metric;
        }
        out << fmt_g17(c.j_sweep[p] / kTwoPi) << ','
            << fmt_g17(points[p].uncontrolled) << ',' << fmt_g17(best_shared)
            << ',' << fmt_g17(best_swapped) << "\n";
      }
    } else {
      out << "b0_mt,theta,phi,uncontrolled_yield,best_controlled_yield,"
             "p80_controlled_yield\n";
      for (size_t p = 0; p < points.size(); ++p) {
        std::vector<double> yields;
        for (size_t i = 0; i < tasks.size(); ++i)
          if (tasks[i].point == p && results[i].ok)
            yields.push_back(results[i].metric);
        const double best =
            yields.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : *std::min_element(yields.begin(), yields.end());
        const double p80 = quantile(yields, 0.8);
        const FieldSpec& f = c.field_sweep[p];
        out << fmt_g17(f.b0) << ',' << fmt_g17(f.theta) << ','
            << fmt_g17(f.phi) << ',' << fmt_g17(points[p].uncontrolled) << ','
            << fmt_g17(best) << ',' << fmt_g17(p80) << "\n";
      }
    }
    out.flush();
    if (!out)
      throw Error(ErrorCode::io_failure, "short write to " + csv_path.string());
  }

  // Finalize the manifest: artifact list, failures, accumulated wall time.
  {
    nlohmann::json files = nlohmann::json::array();
    files.push_back(csv_name);
    nlohmann::json failures = nlohmann::json::array();
    int failed = 0;
    for (size_t i = 0; i < tasks.size(); ++i) {
      if (results[i].ok) {
        files.push_back("schedules/" + tasks[i].id + ".csv");
        files.push_back("history/" + tasks[i].id + ".csv");
      } else {
        ++failed;
        failures.push_back(
            {{"task", tasks[i].id}, {"error", results[i].error}});
      }
    }
    manifest["files"] = files;
    manifest["failures"] = failures;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      wall_start)
            .count();
    manifest["wall_time_s"] = prior_wall + elapsed;
    write_json_atomic(manifest_path, manifest);

    RunOutcome outcome;
    outcome.out_dir = root.string();
    outcome.csv_path = csv_path.string();
    outcome.kind = manifest["kind"].get<std::string>();
    outcome.total_tasks = int(tasks.size());
    outcome.failed_tasks = failed;
    outcome.wall_time_s = manifest["wall_time_s"].get<double>();
    log_line("wrote " + csv_path.string() + " (" +
             std::to_string(failed) + " failed task(s))");
    return outcome;
  }
}

}  // namespace detail

// Fresh run into out_dir (or config.output_dir when empty). Refuses to walk
// over an existing run; that is what resume is for.
inline RunOutcome run_experiment(const ExperimentConfig& config,
                                 const std::string& out_dir,
                                 int cli_threads = 0,
                                 std::ostream* log = nullptr) {
  std::string dir = out_dir.empty() ? config.output_dir : out_dir;
  if (dir.empty())
    throw Error(ErrorCode::bad_config,
                "no output directory: pass --out or set output_dir");
  const std::filesystem::path root(dir);
  if (std::filesystem::exists(root / "manifest.json"))
    throw Error(ErrorCode::io_failure,
                dir + " already holds a run; resume it or pick a new "
                      "directory");
  return detail::run_impl(config, root, nlohmann::json::object(), cli_threads,
                          log);
}

// Continue an interrupted run from its manifest. Finished replications are
// kept; everything else is recomputed from the recorded seeds, so the final
// artifacts match an uninterrupted run byte for byte.
inline RunOutcome resume_experiment(const std::string& dir,
                                    int cli_threads = 0,
                                    std::ostream* log = nullptr) {
  const std::filesystem::path root(dir);
  nlohmann::json manifest =
      load_json_file((root / "manifest.json").string());
  if (!manifest.is_object() || !manifest.contains("config"))
    throw Error(ErrorCode::bad_config,
                "manifest in " + dir + " has no config snapshot");
  const ExperimentConfig config =
      parse_experiment_config(manifest.at("config"));
  return detail::run_impl(config, root, std::move(manifest), cli_threads,
                          log);
}

}  // namespace rpoc
