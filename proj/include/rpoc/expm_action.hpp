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
#include <array>
#include <cmath>
#include <limits>

#include "rpoc/linop.hpp"

namespace rpoc {

struct TaylorOptions {
  double tol = 1e-8;    // relative truncation target
  int max_degree = 55;  // highest Taylor degree considered
  int max_doublings = 8;
};

// w <- exp(A dt) w without forming exp(A dt). The substep count s and the
// truncation degree m are picked from a 1-norm bound, trading s*m matvecs
// against the tolerance; the series itself runs on the trace-shifted
// operator and may stop early once two consecutive terms are negligible.
class TaylorPropagator {
 public:
  explicit TaylorPropagator(TaylorOptions opt = {}) : opt_(opt) {
    if (!(opt_.tol >= 1e-14) || !(opt_.tol < 1.0) || opt_.max_degree < 1 ||
        opt_.max_degree > 55 || opt_.max_doublings < 0)
      throw Error(ErrorCode::bad_config, "invalid Taylor options");
    // Cap the per-substep norm so the largest series term stays within
    // tol/10 of the result after roundoff amplification.
    const double cap =
        std::log(opt_.tol / (10.0 * std::numeric_limits<double>::epsilon()));
    for (int m = 1; m <= opt_.max_degree; ++m)
      theta_[m] = std::min(solve_theta(m, opt_.tol), cap);
  }

  const TaylorOptions& options() const { return opt_; }

  void apply_expm(const LinOp& a, VecCd& w, double dt) const {
    if (w.size() != a.dim())
      throw Error(ErrorCode::shape_mismatch, "state dimension mismatch");
    if (!(dt >= 0.0) || !std::isfinite(dt))
      throw Error(ErrorCode::bad_config, "dt must be finite and >= 0");
    if (!w.allFinite())
      throw Error(ErrorCode::numeric_failure, "non-finite state entering expm");
    if (dt == 0.0) return;

    const double norm_scaled = a.norm1_bound() * dt;
    const cplx mu = a.trace() / cplx(double(a.dim()), 0.0);

    auto [s0, m] = select_plan(norm_scaled);
    const VecCd w_in = w;
    long s = s0;
    for (int attempt = 0; attempt <= opt_.max_doublings; ++attempt, s *= 2) {
      if (run_series(a, w, dt, s, m, mu, norm_scaled / double(s))) return;
      w = w_in;
    }
    throw Error(ErrorCode::expm_divergence,
                "Taylor series failed to converge after substep doubling");
  }

 private:
  // Pick (s, m) minimizing s*m subject to norm/s <= theta_m.
  std::pair<long, int> select_plan(double norm_scaled) const {
    long best_s = -1;
    int best_m = opt_.max_degree;
    double best_cost = 0.0;
    for (int m = 1; m <= opt_.max_degree; ++m) {
      if (theta_[m] <= 0.0) continue;
      const long s = std::max<long>(1, (long)std::ceil(norm_scaled / theta_[m]));
      const double cost = double(s) * double(m);
      if (best_s < 0 || cost < best_cost || (cost == best_cost && s < best_s)) {
        best_s = s;
        best_m = m;
        best_cost = cost;
      }
    }
    return {best_s, best_m};
  }

  bool run_series(const LinOp& a, VecCd& w, double dt, long s, int m, cplx mu,
                  double x_claim) const {
    const Eigen::Index n = a.dim();
    const double dts = dt / double(s);
    const cplx eta = std::exp(mu * dts);
    VecCd f(n), b(n), tmp(n);
    for (long sub = 0; sub < s; ++sub) {
      f = w;
      b = w;
      double prev_term = max_abs(w);
      double term = prev_term;
      bool settled = false;
      int j = 1;
      for (; j <= m; ++j) {
        a.apply(b.data(), tmp.data());
        const double cj = dts / double(j);
        b = cj * (tmp - mu * b);
        f += b;
        term = max_abs(b);
        if (!std::isfinite(term)) return false;
        const double fn = max_abs(f);
        if (term > 1e12 * std::max({1.0, fn, prev_term})) return false;
        if (j > 1 && prev_term + term <= opt_.tol * fn) {
          settled = true;
          break;
        }
        prev_term = term;
      }
      if (!settled) {
        // The plan says the analytic tail past degree m is below tol. Verify
        // with the observed term ratio; a violated norm bound shows up as a
        // tail estimate far above tol and forces a retry with more substeps.
        const double fn = std::max(max_abs(f), 1e-300);
        const double x_eff =
            prev_term > 0.0 ? double(m) * term / prev_term : x_claim;
        const double r = x_eff / double(m + 1);
        const double est =
            r < 0.9 ? term * r / (1.0 - r) : std::numeric_limits<double>::infinity();
        if (est > 100.0 * opt_.tol * fn) return false;
      }
      w = eta * f;
      if (!w.allFinite()) return false;
    }
    return true;
  }

  // Largest x with the Poisson(x) upper-tail mass beyond m at most tol,
  // i.e. the scaled norm a degree-m series still resolves to the target.
  static double solve_theta(int m, double tol) {
    auto tail = [m](double x) {
      double term = std::exp(-x);
      for (int k = 1; k <= m + 1; ++k) term *= x / double(k);
      double sum = term;  // k = m+1
      double xk = term;
      for (int k = m + 2; k < m + 400; ++k) {
        xk *= x / double(k);
        sum += xk;
        if (xk < sum * 1e-18) break;
      }
      return sum;
    };
    double lo = 0.0, hi = double(m + 1);
    if (tail(hi) <= tol) return hi;  // tail already resolved at the peak
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (tail(mid) <= tol ? lo : hi) = mid;
    }
    return lo;
  }

  TaylorOptions opt_;
  std::array<double, 56> theta_{};
};

// Contract-level wrapper: one-off exponentials of an assembled Liouvillian.
inline VecCd expm_action(const SparseCd& l, const VecCd& v, double dt,
                         double tol = 1e-8) {
  if (l.rows() != l.cols() || l.rows() != v.size())
    throw Error(ErrorCode::shape_mismatch, "expm_action dimension mismatch");
  const PreparedMatrix pm = prepare(l);
  SumOp op(l.rows());
  op.add_term(1.0, pm);
  TaylorPropagator prop({tol});
  VecCd w = v;
  prop.apply_expm(op, w, dt);
  return w;
}

}  // namespace rpoc
