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
#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "rpoc/problem.hpp"

namespace rpoc {

struct OptimizerConfig {
  int max_iterations = 500;
  double yield_rel_tol = 1e-4;
  double grad_norm_tol = 1e-8;
  double step_len_tol = 1e-10;
  double grad_change_tol = 1e-10;
  double max_initial_control_change = 0.1;
  int reset_period = 10;
  double init_std = 0.1;
  std::uint64_t rng_seed = 0;
  GradientRule rule = GradientRule::left_endpoint;

  void validate() const {
    if (max_iterations < 0)
      throw Error(ErrorCode::bad_config, "max_iterations must be >= 0");
    for (double tol : {yield_rel_tol, grad_norm_tol, step_len_tol,
                       grad_change_tol, max_initial_control_change})
      if (!(tol > 0.0) || !std::isfinite(tol))
        throw Error(ErrorCode::bad_config,
                    "optimizer tolerances must be positive");
    if (reset_period < 1)
      throw Error(ErrorCode::bad_config, "reset_period must be >= 1");
    if (!(init_std >= 0.0) || !std::isfinite(init_std))
      throw Error(ErrorCode::bad_config, "init_std must be >= 0");
  }
};

enum class Termination { tolerance, max_iters, stalled_line_search };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::tolerance: return "tolerance";
    case Termination::max_iters: return "max-iters";
    case Termination::stalled_line_search: return "stalled-line-search";
  }
  return "unknown";
}

struct OptimizationResult {
  ControlSchedule schedule;
  std::vector<double> objective_history;  // accepted values, index 0 initial
  Termination termination = Termination::max_iters;
  int iterations_used = 0;
  std::vector<int> line_search_halvings;
  std::string stop_detail;  // which tolerance or limit fired
};

// Standard normal deviate with a fixed mapping from raw engine output, so
// schedules replay bitwise across standard-library implementations.
inline double standard_normal(std::mt19937_64& rng) {
  const double u1 = (double(rng() >> 11) + 1.0) * 0x1p-53;  // (0, 1]
  const double u2 = double(rng() >> 11) * 0x1p-53;          // [0, 1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

inline ControlSchedule init_schedule(
    Eigen::Index n_steps, double dt,
    const std::vector<ControlChannel>& channels,
    const OptimizerConfig& config) {
  if (n_steps < 1 || !(dt > 0.0) || !std::isfinite(dt))
    throw Error(ErrorCode::bad_config, "schedule grid must be nonempty");
  std::mt19937_64 rng(config.rng_seed);
  ControlSchedule s;
  s.dt = dt;
  s.amplitudes.resize(n_steps, Eigen::Index(channels.size()));
  for (Eigen::Index k = 0; k < n_steps; ++k)
    for (size_t i = 0; i < channels.size(); ++i)
      s.amplitudes(k, Eigen::Index(i)) =
          std::clamp(config.init_std * standard_normal(rng),
                     channels[i].lower_bound, channels[i].upper_bound);
  return s;
}

inline void project_into_bounds(Eigen::MatrixXd& amplitudes,
                                const std::vector<ControlChannel>& channels) {
  if (amplitudes.cols() != Eigen::Index(channels.size()))
    throw Error(ErrorCode::shape_mismatch, "channel count mismatch");
  for (size_t i = 0; i < channels.size(); ++i)
    amplitudes.col(Eigen::Index(i)) =
        amplitudes.col(Eigen::Index(i))
            .cwiseMax(channels[i].lower_bound)
            .cwiseMin(channels[i].upper_bound);
}

// Max abs gradient entry after zeroing components that point out of the box
// at an active bound (ascent sense): those directions are blocked, so they
// must not keep the gradient-norm stopping rule from firing.
inline double projected_gradient_norm(
    const Eigen::MatrixXd& grad, const Eigen::MatrixXd& amplitudes,
    const std::vector<ControlChannel>& channels) {
  if (grad.rows() != amplitudes.rows() || grad.cols() != amplitudes.cols() ||
      grad.cols() != Eigen::Index(channels.size()))
    throw Error(ErrorCode::shape_mismatch, "gradient shape mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < grad.cols(); ++i) {
    const auto& ch = channels[size_t(i)];
    for (Eigen::Index k = 0; k < grad.rows(); ++k) {
      const double g = grad(k, i);
      if (amplitudes(k, i) >= ch.upper_bound && g > 0.0) continue;
      if (amplitudes(k, i) <= ch.lower_bound && g < 0.0) continue;
      worst = std::max(worst, std::abs(g));
    }
  }
  return worst;
}

struct LineSearchResult {
  ControlSchedule schedule;  // accepted candidate, or the input if stalled
  double objective = 0.0;
  double rate = 0.0;  // post-halving rate, carried to the next iteration
  int halvings = 0;
  bool stalled = false;
  double step_len = 0.0;  // max abs amplitude change actually taken
};

// Ascent step u' = project(u + rate*grad) with halving on non-improvement.
// Accepts only strict improvement; gives up after max_halvings halvings.
template <typename Objective>
LineSearchResult line_search(Objective&& objective,
                             const std::vector<ControlChannel>& channels,
                             const ControlSchedule& sched,
                             const Eigen::MatrixXd& grad,
                             double current_objective, double rate,
                             int max_halvings = 40) {
  if (!grad.allFinite())
    throw Error(ErrorCode::numeric_failure, "non-finite gradient");
  if (!(rate > 0.0) || !std::isfinite(rate))
    throw Error(ErrorCode::bad_config, "line-search rate must be positive");
  LineSearchResult out;
  if (grad.size() == 0 || grad.cwiseAbs().maxCoeff() == 0.0) {
    out.schedule = sched;
    out.objective = current_objective;
    out.rate = rate;
    return out;
  }
  ControlSchedule cand;
  cand.dt = sched.dt;
  for (int h = 0; h <= max_halvings; ++h) {
    cand.amplitudes = sched.amplitudes + rate * grad;
    project_into_bounds(cand.amplitudes, channels);
    const double j = objective(std::as_const(cand));
    if (j > current_objective) {
      out.step_len =
          (cand.amplitudes - sched.amplitudes).cwiseAbs().maxCoeff();
      out.schedule = std::move(cand);
      out.objective = j;
      out.rate = rate;
      out.halvings = h;
      return out;
    }
    rate *= 0.5;
  }
  out.schedule = sched;
  out.objective = current_objective;
  out.rate = rate;
  out.halvings = max_halvings;
  out.stalled = true;
  return out;
}

// Gradient ascent of the signed objective with the halving line search.
// The rate is set so the first candidate moves some amplitude by exactly
// max_initial_control_change, retained across iterations, and recomputed
// from the current gradient every reset_period iterations.
inline OptimizationResult optimize(const ControlProblem& problem,
                                   const OptimizerConfig& config) {
  config.validate();
  OptimizationResult res;
  res.schedule = init_schedule(problem.n_steps(), problem.dt(),
                               problem.channels(), config);
  ProblemEvaluation ev =
      problem.evaluate_with_gradient(res.schedule, config.rule);
  res.objective_history.push_back(ev.objective);
  Eigen::MatrixXd grad = std::move(ev.grad);
  Eigen::MatrixXd prev_grad;
  double rate = 0.0;
  const auto objective_of = [&problem](const ControlSchedule& s) {
    return problem.evaluate(s);
  };

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    if (projected_gradient_norm(grad, res.schedule.amplitudes,
                                problem.channels()) < config.grad_norm_tol) {
      res.termination = Termination::tolerance;
      res.stop_detail = "projected gradient norm";
      res.iterations_used = iter;
      return res;
    }
    if (prev_grad.size() > 0 &&
        (grad - prev_grad).cwiseAbs().maxCoeff() < config.grad_change_tol) {
      res.termination = Termination::tolerance;
      res.stop_detail = "gradient change";
      res.iterations_used = iter;
      return res;
    }
    if ((iter - 1) % config.reset_period == 0)
      rate = config.max_initial_control_change / grad.cwiseAbs().maxCoeff();

    const LineSearchResult ls =
        line_search(objective_of, problem.channels(), res.schedule, grad,
                    res.objective_history.back(), rate);
    res.line_search_halvings.push_back(ls.halvings);
    res.iterations_used = iter;
    rate = ls.rate;
    if (ls.stalled) {
      res.termination = Termination::stalled_line_search;
      res.stop_detail = "line search stalled";
      return res;
    }
    res.schedule = ls.schedule;
    const double prev = res.objective_history.back();
    res.objective_history.push_back(ls.objective);
    const double rel = std::abs(ls.objective - prev) /
                       std::max(std::abs(ls.objective), 1e-12);
    if (rel < config.yield_rel_tol) {
      res.termination = Termination::tolerance;
      res.stop_detail = "relative objective change";
      return res;
    }
    if (ls.step_len < config.step_len_tol) {
      res.termination = Termination::tolerance;
      res.stop_detail = "step length";
      return res;
    }
    prev_grad = std::move(grad);
    grad = problem.evaluate_with_gradient(res.schedule, config.rule).grad;
  }
  res.termination = Termination::max_iters;
  res.stop_detail = "iteration limit";
  return res;
}

}  // namespace rpoc
