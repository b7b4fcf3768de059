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

#include "rpoc/adjoint.hpp"

namespace rpoc {

// One orientation entering the objective with a +1 or -1 weight. Yield
// minimization is the weight -1 case of maximization; the directional
// contrast pairs +1 and -1 terms over the two field orientations.
struct ObjectiveTerm {
  const PreparedSystem* system = nullptr;  // not owned
  double weight = 1.0;
};

struct ProblemEvaluation {
  double objective = 0.0;
  std::vector<double> yields;  // per term, unweighted
  Eigen::MatrixXd grad;
  double grad_norm = 0.0;  // max abs entry
  Eigen::VectorXd control_hamiltonian;
};

// A fixed-shape control problem: signed sum of singlet yields over one or
// more field orientations, all sharing one schedule grid, one initial state,
// and one horizon. Immutable after construction, so worker threads may share
// an instance. The tail past the control window enters through the costate
// seed: the tail yield is linear in the window-end state, and the seed is
// its Riesz vector, so both the objective and the gradient price the tail
// with the same cached functional.
class ControlProblem {
 public:
  ControlProblem(std::vector<ObjectiveTerm> terms, VecCd rho0,
                 Eigen::Index n_steps, double dt, const Horizon& horizon,
                 const TaylorOptions& taylor = {},
                 const Rk8Options& costate = {},
                 Eigen::Index gradient_stride = 1)
      : terms_(std::move(terms)),
        rho0_(std::move(rho0)),
        n_steps_(n_steps),
        dt_(dt),
        horizon_(horizon),
        taylor_(taylor),
        costate_(costate),
        stride_(gradient_stride) {
    if (terms_.empty())
      throw Error(ErrorCode::bad_config, "problem needs an objective term");
    for (const auto& t : terms_) {
      if (!t.system)
        throw Error(ErrorCode::bad_config, "objective term without a system");
      if (t.weight != 1.0 && t.weight != -1.0)
        throw Error(ErrorCode::bad_config, "term weights must be +1 or -1");
    }
    const Eigen::Index n = terms_[0].system->dim();
    const auto& ch0 = terms_[0].system->channels();
    for (const auto& t : terms_) {
      if (t.system->dim() != n)
        throw Error(ErrorCode::shape_mismatch, "terms of unequal dimension");
      const auto& ch = t.system->channels();
      if (ch.size() != ch0.size())
        throw Error(ErrorCode::bad_config, "terms with different channels");
      for (size_t i = 0; i < ch.size(); ++i)
        if (ch[i].kind != ch0[i].kind || ch[i].scale != ch0[i].scale ||
            ch[i].lower_bound != ch0[i].lower_bound ||
            ch[i].upper_bound != ch0[i].upper_bound)
          throw Error(ErrorCode::bad_config, "terms with different channels");
    }
    if (rho0_.size() != n)
      throw Error(ErrorCode::shape_mismatch, "initial state dimension");
    if (n_steps_ < 1 || !(dt_ > 0.0) || !std::isfinite(dt_))
      throw Error(ErrorCode::bad_config, "schedule grid must be nonempty");
    if (stride_ < 1)
      throw Error(ErrorCode::bad_config, "gradient stride must be >= 1");

    t_c_ = double(n_steps_) * dt_;
    const double slack = 1e-9 * std::max(1.0, t_c_);
    if (horizon_.mode == TailMode::finite && horizon_.t1 < t_c_ - slack)
      throw Error(ErrorCode::bad_config, "horizon ends inside the window");
    has_tail_ = horizon_.mode == TailMode::infinite ||
                horizon_.t1 - t_c_ > slack;
    if (has_tail_) {
      seeds_.reserve(terms_.size());
      for (const auto& t : terms_)
        seeds_.push_back(costate_tail_seed(*t.system, t_c_, horizon_,
                                           costate_));
    }
  }

  double evaluate(const ControlSchedule& sched) const {
    check_schedule(sched);
    double j = 0.0;
    for (size_t i = 0; i < terms_.size(); ++i)
      j += terms_[i].weight * term_yield(i, sched);
    return j;
  }

  std::vector<double> term_yields(const ControlSchedule& sched) const {
    check_schedule(sched);
    std::vector<double> out;
    out.reserve(terms_.size());
    for (size_t i = 0; i < terms_.size(); ++i)
      out.push_back(term_yield(i, sched));
    return out;
  }

  ProblemEvaluation evaluate_with_gradient(
      const ControlSchedule& sched,
      GradientRule rule = GradientRule::left_endpoint) const {
    check_schedule(sched);
    ProblemEvaluation out;
    out.grad = Eigen::MatrixXd::Zero(n_steps_, n_channels());
    out.control_hamiltonian = Eigen::VectorXd::Zero(n_steps_);
    for (size_t i = 0; i < terms_.size(); ++i) {
      const PreparedSystem& psys = *terms_[i].system;
      const Trajectory traj =
          forward_trajectory(psys, sched, rho0_, taylor_, stride_);
      double y = traj.yield_so_far.back();
      if (has_tail_) y += std::real(seeds_[i].dot(traj.checkpoints.back()));
      out.yields.push_back(y);
      out.objective += terms_[i].weight * y;
      const CostateTrajectory costate =
          costate_backward(psys, sched, terms_[i].weight, horizon_, costate_,
                           has_tail_ ? &seeds_[i] : nullptr);
      const GradientReport rep = assemble_gradient(
          psys, traj, costate, sched, rule, terms_[i].weight, taylor_);
      out.grad += rep.grad;
      out.control_hamiltonian += rep.control_hamiltonian;
    }
    out.grad_norm =
        out.grad.size() > 0 ? out.grad.cwiseAbs().maxCoeff() : 0.0;
    return out;
  }

  const std::vector<ObjectiveTerm>& terms() const { return terms_; }
  const std::vector<ControlChannel>& channels() const {
    return terms_[0].system->channels();
  }
  Eigen::Index n_channels() const {
    return Eigen::Index(channels().size());
  }
  Eigen::Index n_steps() const { return n_steps_; }
  double dt() const { return dt_; }
  double t_c() const { return t_c_; }
  const Horizon& horizon() const { return horizon_; }
  const VecCd& rho0() const { return rho0_; }
  bool has_tail() const { return has_tail_; }

 private:
  void check_schedule(const ControlSchedule& sched) const {
    if (sched.n_steps() != n_steps_ || sched.dt != dt_)
      throw Error(ErrorCode::bad_config,
                  "schedule grid differs from the problem grid");
    validate_schedule(sched, channels());
  }

  double term_yield(size_t i, const ControlSchedule& sched) const {
    // Endpoints-only storage; intermediate states are not needed here.
    const Trajectory traj =
        forward_trajectory(*terms_[i].system, sched, rho0_, taylor_,
                           n_steps_);
    double y = traj.yield_so_far.back();
    if (has_tail_) y += std::real(seeds_[i].dot(traj.checkpoints.back()));
    return y;
  }

  std::vector<ObjectiveTerm> terms_;
  VecCd rho0_;
  Eigen::Index n_steps_;
  double dt_;
  Horizon horizon_;
  TaylorOptions taylor_;
  Rk8Options costate_;
  Eigen::Index stride_;
  double t_c_ = 0.0;
  bool has_tail_ = false;
  std::vector<VecCd> seeds_;  // unsigned tail seeds, one per term
};

}  // namespace rpoc
