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

#include <functional>

#include "rpoc/propagation.hpp"
#include "rpoc/rk8.hpp"

namespace rpoc {

// Costates at control boundaries, aligned with Trajectory.t_grid. When the
// horizon has no tail (t1 equals the control window end) the terminal entry
// is the exact zero vector; with a tail it holds lambda at the window end,
// already carrying the tail's sensitivity.
struct CostateTrajectory {
  std::vector<VecCd> checkpoints;
};

namespace detail {

// Backward costate sweep in the reversed time s = t1 - t, where the
// equation d/dt lambda = -L(u)^dag lambda - sign*forcing becomes
// d/ds mu = +L(u)^dag mu + sign*forcing with mu(0) = 0.
// make_adj_op(k) must yield the adjoint generator of control step k;
// k = -1 requests the drift-only (tail) generator.
inline CostateTrajectory costate_backward_impl(
    const std::function<SumOp(Eigen::Index)>& make_adj_op,
    const std::function<VecCd()>& infinite_seed, Eigen::Index dim,
    const ControlSchedule& sched, double sign, const Horizon& horizon,
    const VecCd& forcing, const Rk8Options& opts, const VecCd* tail_seed) {
  if (sign != 1.0 && sign != -1.0)
    throw Error(ErrorCode::bad_config, "sign must be +1 or -1");
  if (forcing.size() != dim)
    throw Error(ErrorCode::shape_mismatch, "forcing dimension mismatch");
  const double t_c = sched.t_end();
  const double slack = 1e-9 * std::max(1.0, std::abs(t_c));
  if (horizon.mode == TailMode::finite && horizon.t1 < t_c - slack)
    throw Error(ErrorCode::bad_config, "horizon must satisfy t1 >= t_c");

  const Eigen::Index steps = sched.n_steps();
  CostateTrajectory costate;
  costate.checkpoints.assign(size_t(steps) + 1, VecCd());

  Rk8Integrator ode(opts);
  double h = 0.0;
  const VecCd sf = sign * forcing;
  VecCd mu = VecCd::Zero(dim);

  const double tail_len = horizon.mode == TailMode::finite
                              ? std::max(0.0, horizon.t1 - t_c)
                              : 0.0;
  if (tail_seed) {
    mu = sign * (*tail_seed);
  } else if (horizon.mode == TailMode::infinite) {
    mu = sign * infinite_seed();
  } else if (tail_len > slack) {
    const SumOp op = make_adj_op(-1);
    auto rhs = [&op, &sf](const VecCd& y, VecCd& dy) {
      op.apply(y.data(), dy.data());
      dy += sf;
    };
    ode.integrate(rhs, mu, 0.0, tail_len, &h);
  }
  // Without a tail, mu is still the untouched zero vector here, so the
  // terminal costate is exactly zero rather than zero up to solver error.
  costate.checkpoints[size_t(steps)] = mu;

  for (Eigen::Index k = steps - 1; k >= 0; --k) {
    const SumOp op = make_adj_op(k);
    auto rhs = [&op, &sf](const VecCd& y, VecCd& dy) {
      op.apply(y.data(), dy.data());
      dy += sf;
    };
    ode.integrate(rhs, mu, 0.0, sched.dt, &h);
    if (!mu.allFinite())
      throw Error(ErrorCode::numeric_failure, "non-finite costate");
    costate.checkpoints[size_t(k)] = mu;
  }
  return costate;
}

inline VecCd solve_adjoint_linear(const SparseCd& l_adj, const VecCd& rhs) {
  Eigen::SparseMatrix<cplx, Eigen::ColMajor> lcol(l_adj);
  lcol.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<cplx, Eigen::ColMajor>> lu;
  lu.compute(lcol);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorCode::singular_drift,
                "adjoint drift is not invertible; infinite tail undefined");
  const VecCd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw Error(ErrorCode::singular_drift, "adjoint sparse solve failed");
  return x;
}

}  // namespace detail

// lambda(t_c) for sign = +1; scaling by the weight is the caller's business
// (the costate is linear in its forcing). Finite mode integrates the
// drift-only segment [t_c, t1]; infinite mode solves the adjoint system.
inline VecCd costate_tail_seed(const PreparedSystem& psys, double t_c,
                               const Horizon& horizon,
                               const Rk8Options& opts = {}) {
  if (horizon.mode == TailMode::infinite)
    return -detail::solve_adjoint_linear(psys.l0_adjoint(), psys.forcing());
  const double slack = 1e-9 * std::max(1.0, std::abs(t_c));
  if (horizon.t1 < t_c - slack)
    throw Error(ErrorCode::bad_config, "horizon must satisfy t1 >= t_c");
  VecCd mu = VecCd::Zero(psys.dim());
  const double tail_len = std::max(0.0, horizon.t1 - t_c);
  if (tail_len <= slack) return mu;
  const SumOp op = psys.adjoint_drift_operator();
  const VecCd& forcing = psys.forcing();
  auto rhs = [&op, &forcing](const VecCd& y, VecCd& dy) {
    op.apply(y.data(), dy.data());
    dy += forcing;
  };
  Rk8Integrator ode(opts);
  ode.integrate(rhs, mu, 0.0, tail_len);
  return mu;
}

inline CostateTrajectory costate_backward(const PreparedSystem& psys,
                                          const ControlSchedule& sched,
                                          double sign, const Horizon& horizon,
                                          const Rk8Options& opts = {},
                                          const VecCd* tail_seed = nullptr) {
  validate_schedule(sched, psys.channels());
  return detail::costate_backward_impl(
      [&psys, &sched](Eigen::Index k) {
        return k < 0 ? psys.adjoint_drift_operator()
                     : psys.adjoint_step_operator(sched.amplitudes, k);
      },
      [&psys] {
        return -detail::solve_adjoint_linear(psys.l0_adjoint(),
                                             psys.forcing());
      },
      psys.dim(), sched, sign, horizon, psys.forcing(), opts, tail_seed);
}

// Low-level variant with the drift and forcing decoupled, for callers that
// need costates of generators outside the physical assembly (a zero drift
// with nonzero forcing integrates to lambda(t) = (t1-t)*forcing exactly).
inline CostateTrajectory costate_backward(
    const SparseCd& l0, const std::vector<ControlChannel>& channels,
    const ControlSchedule& sched, double sign, const Horizon& horizon,
    const VecCd& forcing, const Rk8Options& opts = {},
    const VecCd* tail_seed = nullptr) {
  validate_schedule(sched, channels);
  if (l0.rows() != l0.cols() || l0.rows() != forcing.size())
    throw Error(ErrorCode::shape_mismatch, "drift/forcing dimension mismatch");
  const SparseCd l0_adj = sparse_adjoint(l0);
  const PreparedMatrix l0_prep = prepare(l0_adj);
  std::vector<SparseCd> gen_adj;
  gen_adj.reserve(channels.size());
  for (const auto& ch : channels) gen_adj.push_back(sparse_adjoint(ch.generator));
  std::vector<PreparedMatrix> gen_prep;
  gen_prep.reserve(channels.size());
  for (const auto& g : gen_adj) gen_prep.push_back(prepare(g));

  return detail::costate_backward_impl(
      [&](Eigen::Index k) {
        SumOp op(forcing.size());
        op.add_term(1.0, l0_prep);
        if (k >= 0)
          for (size_t i = 0; i < channels.size(); ++i)
            op.add_term(
                sched.amplitudes(k, Eigen::Index(i)) * channels[i].scale,
                gen_prep[i]);
        return op;
      },
      [&] { return -detail::solve_adjoint_linear(l0_adj, forcing); },
      forcing.size(), sched, sign, horizon, forcing, opts, tail_seed);
}

enum class GradientRule { left_endpoint, midpoint, exact };

struct GradientReport {
  Eigen::MatrixXd grad;                 // n_steps x n_channels
  double norm = 0.0;                    // max abs entry
  Eigen::VectorXd control_hamiltonian;  // costate-generator pairing per step
};

// Gradient of the signed objective w.r.t. every amplitude. left_endpoint
// (default) and midpoint price the boundary pairings
// Re<lambda(t_k)| scale_i L_i |rho(t_k)>*dt; exact differentiates the
// one-step propagator itself (block-triangular trick), which costs one
// doubled-dimension exponential per step and channel and is meant for
// verification rather than the optimization loop.
inline GradientReport assemble_gradient(const PreparedSystem& psys,
                                        const Trajectory& traj,
                                        const CostateTrajectory& costate,
                                        const ControlSchedule& sched,
                                        GradientRule rule = GradientRule::left_endpoint,
                                        double sign = 1.0,
                                        const TaylorOptions& topt = {}) {
  const Eigen::Index steps = sched.n_steps();
  const Eigen::Index nch = sched.n_channels();
  const Eigen::Index n = psys.dim();
  if (traj.n_steps() != steps ||
      Eigen::Index(costate.checkpoints.size()) != steps + 1)
    throw Error(ErrorCode::alignment, "trajectory/costate grids differ");
  for (const auto& v : costate.checkpoints)
    if (v.size() != n)
      throw Error(ErrorCode::alignment, "costate dimension mismatch");

  // Boundary pairings pair(k,i) = Re<lambda_k| scale_i L_i |rho_k>.
  Eigen::MatrixXd pair(steps + 1, nch);
  const TaylorPropagator prop(topt);
  GradientReport rep;
  rep.grad.resize(steps, nch);
  rep.control_hamiltonian.resize(steps);

  const VecCd zero_flux = VecCd::Zero(n);
  VecCd cur = traj.state_at_boundary(0);
  VecCd tmp(n);
  for (Eigen::Index k = 0; k <= steps; ++k) {
    if (traj.stored(k)) cur = traj.state_at_boundary(k);
    const VecCd& lam = costate.checkpoints[size_t(k)];
    for (Eigen::Index i = 0; i < nch; ++i) {
      const auto& ch = psys.channels()[size_t(i)];
      tmp.setZero();
      csr_acc_matvec(ch.generator, 1.0, cur.data(), tmp.data());
      pair(k, i) = ch.scale * std::real(lam.dot(tmp));
    }
    if (k < steps) {
      rep.control_hamiltonian(k) =
          sched.amplitudes.row(k).dot(pair.row(k));
      if (rule == GradientRule::exact) {
        const SumOp step_op = psys.step_operator(sched.amplitudes, k, true);
        for (Eigen::Index i = 0; i < nch; ++i) {
          SumOp dir(n);
          dir.add_term(psys.channels()[size_t(i)].scale,
                       psys.generator_prep(size_t(i)));
          dir.set_flux_row(&zero_flux);
          const FrechetOp block(step_op, dir);
          VecCd z = VecCd::Zero(2 * (n + 1));
          z.segment(n + 1, n) = cur;
          prop.apply_expm(block, z, sched.dt);
          const auto& lam_next = costate.checkpoints[size_t(k) + 1];
          rep.grad(k, i) = std::real(lam_next.dot(z.head(n))) +
                           sign * std::real(z(n));
        }
      }
      if (!traj.stored(k + 1)) {
        const SumOp op = psys.step_operator(sched.amplitudes, k, false);
        prop.apply_expm(op, cur, sched.dt);
      }
    }
  }

  if (rule == GradientRule::left_endpoint)
    rep.grad = sched.dt * pair.topRows(steps);
  else if (rule == GradientRule::midpoint)
    rep.grad = 0.5 * sched.dt *
               (pair.topRows(steps) + pair.bottomRows(steps));
  if (!rep.grad.allFinite())
    throw Error(ErrorCode::numeric_failure, "non-finite gradient");
  rep.norm = steps * nch > 0 ? rep.grad.cwiseAbs().maxCoeff() : 0.0;
  return rep;
}

}  // namespace rpoc
