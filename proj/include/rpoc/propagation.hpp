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

#include <Eigen/SparseLU>
#include <vector>

#include "rpoc/expm_action.hpp"
#include "rpoc/superoperator.hpp"

namespace rpoc {

// Piecewise-constant control amplitudes on a uniform grid starting at t = 0.
struct ControlSchedule {
  double dt = 0.0;              // µs
  Eigen::MatrixXd amplitudes;   // n_steps x n_channels, dimensionless

  Eigen::Index n_steps() const { return amplitudes.rows(); }
  Eigen::Index n_channels() const { return amplitudes.cols(); }
  double t_end() const { return dt * double(n_steps()); }
};

inline void validate_schedule(const ControlSchedule& sched,
                              const std::vector<ControlChannel>& channels) {
  if (!(sched.dt > 0.0) || !std::isfinite(sched.dt))
    throw Error(ErrorCode::bad_config, "schedule dt must be finite and > 0");
  if (sched.n_steps() < 1)
    throw Error(ErrorCode::bad_config, "schedule needs at least one step");
  if (sched.n_channels() != Eigen::Index(channels.size()))
    throw Error(ErrorCode::shape_mismatch,
                "schedule column count must match the channel list");
  for (Eigen::Index i = 0; i < sched.n_channels(); ++i) {
    const auto& ch = channels[size_t(i)];
    for (Eigen::Index k = 0; k < sched.n_steps(); ++k) {
      const double u = sched.amplitudes(k, i);
      if (!std::isfinite(u) || u < ch.lower_bound || u > ch.upper_bound)
        throw Error(ErrorCode::bad_config,
                    "amplitude outside channel bounds on channel " + ch.name);
    }
  }
}

// Drift, control generators, and recombination bookkeeping assembled once
// per physical configuration. Prepared views point into owned matrices, so
// instances are pinned in place.
class PreparedSystem {
 public:
  PreparedSystem(const SpinSystem& sys, const FieldSpec& field, double k_b,
                 double k_f, const NoiseSpec& noise, ControlFamily family,
                 double amplitude)
      : k_b_(k_b),
        l0_(drift_liouvillian(sys, field, k_b, k_f, noise)),
        channels_(control_channels(family, sys.reg, amplitude)),
        ps_(singlet_projector(sys.reg)) {
    const VecCd vec_ps = vectorize(DenseCd(ps_));
    flux_ = k_b * vec_ps.conjugate();  // row functional k_b <vec(P_S), .>
    forcing_ = k_b * vec_ps;           // costate source term
    l0_prep_ = prepare(l0_);
    l0_adj_ = sparse_adjoint(l0_);
    l0_adj_prep_ = prepare(l0_adj_);
    for (const auto& ch : channels_) {
      gen_adj_.push_back(sparse_adjoint(ch.generator));
      gen_prep_.push_back(prepare(ch.generator));
    }
    for (const auto& g : gen_adj_) gen_adj_prep_.push_back(prepare(g));
  }

  PreparedSystem(const PreparedSystem&) = delete;
  PreparedSystem& operator=(const PreparedSystem&) = delete;

  Eigen::Index dim() const { return l0_.rows(); }
  double k_b() const { return k_b_; }
  const SparseCd& l0() const { return l0_; }
  const SparseCd& l0_adjoint() const { return l0_adj_; }
  const SparseCd& ps() const { return ps_; }
  const std::vector<ControlChannel>& channels() const { return channels_; }
  const VecCd& flux() const { return flux_; }
  const VecCd& forcing() const { return forcing_; }

  // L(u) = L0 + sum_i u_i scale_i L_i, optionally with the yield flux row.
  SumOp step_operator(const Eigen::MatrixXd& u, Eigen::Index k,
                      bool with_flux) const {
    SumOp op(dim());
    op.add_term(1.0, l0_prep_);
    for (size_t i = 0; i < channels_.size(); ++i)
      op.add_term(u(k, Eigen::Index(i)) * channels_[i].scale, gen_prep_[i]);
    if (with_flux) op.set_flux_row(&flux_);
    return op;
  }

  SumOp drift_operator(bool with_flux) const {
    SumOp op(dim());
    op.add_term(1.0, l0_prep_);
    if (with_flux) op.set_flux_row(&flux_);
    return op;
  }

  // Adjoint L(u)^dagger for the costate equation.
  SumOp adjoint_step_operator(const Eigen::MatrixXd& u, Eigen::Index k) const {
    SumOp op(dim());
    op.add_term(1.0, l0_adj_prep_);
    for (size_t i = 0; i < channels_.size(); ++i)
      op.add_term(u(k, Eigen::Index(i)) * channels_[i].scale, gen_adj_prep_[i]);
    return op;
  }

  SumOp adjoint_drift_operator() const {
    SumOp op(dim());
    op.add_term(1.0, l0_adj_prep_);
    return op;
  }

  const PreparedMatrix& generator_prep(size_t i) const { return gen_prep_[i]; }

 private:
  double k_b_;
  SparseCd l0_, l0_adj_;
  std::vector<ControlChannel> channels_;
  SparseCd ps_;
  VecCd flux_, forcing_;
  PreparedMatrix l0_prep_, l0_adj_prep_;
  std::vector<SparseCd> gen_adj_;
  std::vector<PreparedMatrix> gen_prep_, gen_adj_prep_;
};

// States and accumulated recombination yield at control boundaries.
// With stride K only every Kth boundary state is stored (plus the last);
// yields and times cover every boundary regardless.
struct Trajectory {
  std::vector<VecCd> checkpoints;
  std::vector<double> yield_so_far;
  std::vector<double> t_grid;
  Eigen::Index stride = 1;

  Eigen::Index n_steps() const { return Eigen::Index(t_grid.size()) - 1; }
  bool stored(Eigen::Index k) const {
    return k % stride == 0 || k == n_steps();
  }
  const VecCd& state_at_boundary(Eigen::Index k) const {
    if (!stored(k))
      throw Error(ErrorCode::alignment, "boundary state not stored");
    if (k % stride == 0) return checkpoints[size_t(k / stride)];
    return checkpoints.back();
  }
};

inline Trajectory forward_trajectory(const PreparedSystem& psys,
                                     const ControlSchedule& sched,
                                     const VecCd& rho0,
                                     const TaylorOptions& topt = {},
                                     Eigen::Index stride = 1) {
  validate_schedule(sched, psys.channels());
  if (rho0.size() != psys.dim())
    throw Error(ErrorCode::shape_mismatch, "initial state dimension mismatch");
  if (stride < 1)
    throw Error(ErrorCode::bad_config, "checkpoint stride must be >= 1");

  const Eigen::Index n = psys.dim(), steps = sched.n_steps();
  const TaylorPropagator prop(topt);
  Trajectory traj;
  traj.stride = stride;
  traj.checkpoints.reserve(size_t(steps / stride) + 2);
  traj.yield_so_far.reserve(size_t(steps) + 1);
  traj.t_grid.reserve(size_t(steps) + 1);

  VecCd w(n + 1);
  w.head(n) = rho0;
  w(n) = 0.0;
  traj.checkpoints.push_back(rho0);
  traj.yield_so_far.push_back(0.0);
  traj.t_grid.push_back(0.0);

  double prev_yield = 0.0;
  for (Eigen::Index k = 0; k < steps; ++k) {
    const SumOp op = psys.step_operator(sched.amplitudes, k, true);
    prop.apply_expm(op, w, sched.dt);
    const double y = std::real(w(n));
    if (!(y >= prev_yield - 1e-12) || !(y <= 1.0 + 1e-9))
      throw Error(ErrorCode::numeric_failure,
                  "accumulated yield left its physical range");
    prev_yield = y;
    traj.yield_so_far.push_back(y);
    traj.t_grid.push_back(sched.dt * double(k + 1));
    if ((k + 1) % stride == 0 || k + 1 == steps)
      traj.checkpoints.push_back(w.head(n));
  }
  return traj;
}

enum class TailMode { finite, infinite };

// Reporting horizon: controls occupy [0, t_c] with t_c = schedule length;
// the yield is evaluated out to t1 >= t_c (finite) or t -> infinity.
struct Horizon {
  double t1 = 0.0;  // µs
  TailMode mode = TailMode::finite;
  double coarse_dt = 0.1;  // tail propagation step, finite mode
};

// Yield collected after the control window: drift-only propagation from the
// window end t_c out to the reporting horizon t1 (finite mode, coarse equal
// steps), or the full t -> infinity limit via one sparse solve.
inline double tail_evaluate(const PreparedSystem& psys, const VecCd& rho_end,
                            double t_c, double t1, TailMode mode,
                            const TaylorOptions& topt = {},
                            double coarse_dt = 0.1) {
  if (rho_end.size() != psys.dim())
    throw Error(ErrorCode::shape_mismatch, "tail state dimension mismatch");
  if (mode == TailMode::finite) {
    if (!std::isfinite(t1) || !std::isfinite(t_c))
      throw Error(ErrorCode::bad_config, "tail horizon must be finite");
    // One-ulp slack: t_c arrives as n_steps*dt and may overshoot the
    // configured horizon by roundoff.
    const double slack = 1e-9 * std::max(1.0, std::abs(t_c));
    if (t1 < t_c - slack)
      throw Error(ErrorCode::bad_config, "tail horizon must satisfy t1 >= t_c");
    if (t1 - t_c <= slack) return 0.0;
    if (!(coarse_dt > 0.0))
      throw Error(ErrorCode::bad_config, "coarse step must be > 0");
    const Eigen::Index n = psys.dim();
    const long nseg = std::max<long>(1, (long)std::ceil((t1 - t_c) / coarse_dt));
    const double dt = (t1 - t_c) / double(nseg);
    const SumOp op = psys.drift_operator(true);
    const TaylorPropagator prop(topt);
    VecCd w(n + 1);
    w.head(n) = rho_end;
    w(n) = 0.0;
    for (long i = 0; i < nseg; ++i) prop.apply_expm(op, w, dt);
    return std::real(w(n));
  }

  // y = -k_b <vec(P_S), L0^{-1} vec(rho)>; the drift is invertible whenever
  // the escape rate k_f is positive.
  Eigen::SparseMatrix<cplx, Eigen::ColMajor> lcol(psys.l0());
  lcol.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<cplx, Eigen::ColMajor>> lu;
  lu.compute(lcol);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorCode::singular_drift,
                "drift generator is not invertible; infinite tail undefined");
  const VecCd x = lu.solve(rho_end);
  if (lu.info() != Eigen::Success || !x.allFinite())
    throw Error(ErrorCode::singular_drift, "sparse solve failed");
  cplx acc = 0.0;
  const VecCd& f = psys.flux();
  for (Eigen::Index i = 0; i < x.size(); ++i) acc += f(i) * x(i);
  return -std::real(acc);
}

}  // namespace rpoc
