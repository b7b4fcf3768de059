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
#include <cmath>

#include "rpoc/types.hpp"

namespace rpoc {

// Explicit eighth-order Dormand-Prince pair (Hairer-Wanner DOP853
// coefficients) on complex state vectors, for autonomous right-hand
// sides f(y, dydt). Adaptive mode blends the embedded fifth- and
// third-order error estimates; fixed-step mode reuses the same stages
// without error control.
struct Rk8Options {
  double rtol = 1e-10;
  double atol = 1e-12;
  long max_steps = 1000000;
};

class Rk8Integrator {
 public:
  explicit Rk8Integrator(Rk8Options opt = {}) : opt_(opt) {
    if (!(opt_.rtol > 0.0) || !(opt_.atol > 0.0) || opt_.max_steps < 1)
      throw Error(ErrorCode::bad_config, "invalid integrator options");
  }

  const Rk8Options& options() const { return opt_; }

  // Advances y from t0 to t1 (t1 >= t0). h_inout, when given, supplies a
  // warm-start step size on entry (values <= 0 request a fresh estimate)
  // and is left holding the controller's final prediction.
  template <class Rhs>
  void integrate(Rhs&& f, VecCd& y, double t0, double t1,
                 double* h_inout = nullptr) {
    if (!(t1 >= t0) || !std::isfinite(t0) || !std::isfinite(t1))
      throw Error(ErrorCode::bad_config, "integration interval must be ordered");
    const double hmax = t1 - t0;
    const double scale = std::max(std::abs(t0), std::abs(t1));
    if (hmax <= scale * kUround) return;
    alloc(y.size());

    const double facc1 = 1.0 / kFac1, facc2 = 1.0 / kFac2;
    const double expo1 = 1.0 / 8.0;
    double t = t0;
    f(y, k_[0]);
    double h = (h_inout && *h_inout > 0.0) ? std::min(*h_inout, hmax)
                                           : hinit(f, y, hmax);
    double hnew = h;
    bool last = false, reject = false;
    long nstep = 0;
    while (true) {
      if (++nstep > opt_.max_steps)
        throw Error(ErrorCode::stiff_costate,
                    "adaptive integrator exceeded its step budget");
      if (0.1 * h <= std::max(scale, std::abs(t)) * kUround)
        throw Error(ErrorCode::stiff_costate,
                    "adaptive integrator step size underflow");
      if (t + 1.01 * h - t1 > 0.0) {
        h = t1 - t;
        last = true;
      }
      step12(f, y, h);
      const double err = h * error_estimate(y);

      const double fac11 = std::pow(err, expo1);
      const double fac = std::clamp(fac11 / kSafe, facc2, facc1);
      hnew = h / fac;
      if (err <= 1.0) {
        f(ynew_, k_[3]);
        y = ynew_;
        k_[0] = k_[3];
        t += h;
        if (last) break;
        if (hnew > hmax) hnew = hmax;
        if (reject) hnew = std::min(hnew, h);
        reject = false;
      } else {
        hnew = h / std::min(facc1, fac11 / kSafe);
        reject = true;
        last = false;
      }
      h = hnew;
    }
    if (h_inout) *h_inout = hnew;
  }

  // n_steps equal steps with no error control. The local error of the
  // eighth-order formula scales as h^9, so halving the step must shrink
  // the global error by about 2^8.
  template <class Rhs>
  void integrate_fixed(Rhs&& f, VecCd& y, double t0, double t1, long n_steps) {
    if (n_steps < 1 || !(t1 >= t0))
      throw Error(ErrorCode::bad_config, "invalid fixed-step request");
    alloc(y.size());
    const double h = (t1 - t0) / double(n_steps);
    f(y, k_[0]);
    for (long i = 0; i < n_steps; ++i) {
      step12(f, y, h);
      y = ynew_;
      if (i + 1 < n_steps) f(y, k_[0]);
    }
  }

 private:
  static constexpr double kUround = 2.3e-16;
  static constexpr double kSafe = 0.9;
  static constexpr double kFac1 = 1.0 / 3.0;
  static constexpr double kFac2 = 6.0;

  void alloc(Eigen::Index n) {
    for (auto& k : k_) k.resize(n);
    ww_.resize(n);
    ynew_.resize(n);
    kcomb_.resize(n);
  }

  // Twelve-stage core. Consumes k_[0] = f(y); leaves the proposed state in
  // ynew_, the b-weighted derivative combination in kcomb_, and the stage
  // derivatives needed by error_estimate in k_ (stages 11 and 12 land in
  // k_[1] and k_[2], as in the reference scheme).
  template <class Rhs>
  void step12(Rhs&& f, const VecCd& y, double h) {
    constexpr double a21 = 5.26001519587677318785587544488E-2,
                     a31 = 1.97250569845378994544595329183E-2,
                     a32 = 5.91751709536136983633785987549E-2,
                     a41 = 2.95875854768068491816892993775E-2,
                     a43 = 8.87627564304205475450678981324E-2,
                     a51 = 2.41365134159266685502369798665E-1,
                     a53 = -8.84549479328286085344864962717E-1,
                     a54 = 9.24834003261792003115737966543E-1,
                     a61 = 3.7037037037037037037037037037E-2,
                     a64 = 1.70828608729473871279604482173E-1,
                     a65 = 1.25467687566822425016691814123E-1,
                     a71 = 3.7109375E-2,
                     a74 = 1.70252211019544039314978060272E-1,
                     a75 = 6.02165389804559606850219397283E-2,
                     a76 = -1.7578125E-2,
                     a81 = 3.70920001185047927108779319836E-2,
                     a84 = 1.70383925712239993810214054705E-1,
                     a85 = 1.07262030446373284651809199168E-1,
                     a86 = -1.53194377486244017527936158236E-2,
                     a87 = 8.27378916381402288758473766002E-3,
                     a91 = 6.24110958716075717114429577812E-1,
                     a94 = -3.36089262944694129406857109825E0,
                     a95 = -8.68219346841726006818189891453E-1,
                     a96 = 2.75920996994467083049415600797E1,
                     a97 = 2.01540675504778934086186788979E1,
                     a98 = -4.34898841810699588477366255144E1,
                     a101 = 4.77662536438264365890433908527E-1,
                     a104 = -2.48811461997166764192642586468E0,
                     a105 = -5.90290826836842996371446475743E-1,
                     a106 = 2.12300514481811942347288949897E1,
                     a107 = 1.52792336328824235832596922938E1,
                     a108 = -3.32882109689848629194453265587E1,
                     a109 = -2.03312017085086261358222928593E-2,
                     a111 = -9.3714243008598732571704021658E-1,
                     a114 = 5.18637242884406370830023853209E0,
                     a115 = 1.09143734899672957818500254654E0,
                     a116 = -8.14978701074692612513997267357E0,
                     a117 = -1.85200656599969598641566180701E1,
                     a118 = 2.27394870993505042818970056734E1,
                     a119 = 2.49360555267965238987089396762E0,
                     a1110 = -3.0467644718982195003823669022E0,
                     a121 = 2.27331014751653820792359768449E0,
                     a124 = -1.05344954667372501984066689879E1,
                     a125 = -2.00087205822486249909675718444E0,
                     a126 = -1.79589318631187989172765950534E1,
                     a127 = 2.79488845294199600508499808837E1,
                     a128 = -2.85899827713502369474065508674E0,
                     a129 = -8.87285693353062954433549289258E0,
                     a1210 = 1.23605671757943030647266201528E1,
                     a1211 = 6.43392746015763530355970484046E-1,
                     b1 = 5.42937341165687622380535766363E-2,
                     b6 = 4.45031289275240888144113950566E0,
                     b7 = 1.89151789931450038304281599044E0,
                     b8 = -5.8012039600105847814672114227E0,
                     b9 = 3.1116436695781989440891606237E-1,
                     b10 = -1.52160949662516078556178806805E-1,
                     b11 = 2.01365400804030348374776537501E-1,
                     b12 = 4.47106157277725905176885569043E-2;

    ww_ = y + h * a21 * k_[0];
    f(ww_, k_[1]);
    ww_ = y + h * (a31 * k_[0] + a32 * k_[1]);
    f(ww_, k_[2]);
    ww_ = y + h * (a41 * k_[0] + a43 * k_[2]);
    f(ww_, k_[3]);
    ww_ = y + h * (a51 * k_[0] + a53 * k_[2] + a54 * k_[3]);
    f(ww_, k_[4]);
    ww_ = y + h * (a61 * k_[0] + a64 * k_[3] + a65 * k_[4]);
    f(ww_, k_[5]);
    ww_ = y + h * (a71 * k_[0] + a74 * k_[3] + a75 * k_[4] + a76 * k_[5]);
    f(ww_, k_[6]);
    ww_ = y + h * (a81 * k_[0] + a84 * k_[3] + a85 * k_[4] + a86 * k_[5] +
                   a87 * k_[6]);
    f(ww_, k_[7]);
    ww_ = y + h * (a91 * k_[0] + a94 * k_[3] + a95 * k_[4] + a96 * k_[5] +
                   a97 * k_[6] + a98 * k_[7]);
    f(ww_, k_[8]);
    ww_ = y + h * (a101 * k_[0] + a104 * k_[3] + a105 * k_[4] + a106 * k_[5] +
                   a107 * k_[6] + a108 * k_[7] + a109 * k_[8]);
    f(ww_, k_[9]);
    ww_ = y + h * (a111 * k_[0] + a114 * k_[3] + a115 * k_[4] + a116 * k_[5] +
                   a117 * k_[6] + a118 * k_[7] + a119 * k_[8] + a1110 * k_[9]);
    f(ww_, k_[1]);  // stage 11
    ww_ = y + h * (a121 * k_[0] + a124 * k_[3] + a125 * k_[4] + a126 * k_[5] +
                   a127 * k_[6] + a128 * k_[7] + a129 * k_[8] +
                   a1210 * k_[9] + a1211 * k_[1]);
    f(ww_, k_[2]);  // stage 12
    kcomb_ = b1 * k_[0] + b6 * k_[5] + b7 * k_[6] + b8 * k_[7] + b9 * k_[8] +
             b10 * k_[9] + b11 * k_[1] + b12 * k_[2];
    ynew_ = y + h * kcomb_;
  }

  // Blended fifth/third-order error estimate, per unit step size.
  double error_estimate(const VecCd& y) const {
    constexpr double bhh1 = 0.244094488188976377952755905512E+00,
                     bhh2 = 0.733846688281611857341361741547E+00,
                     bhh3 = 0.220588235294117647058823529412E-01,
                     er1 = 0.1312004499419488073250102996E-01,
                     er6 = -0.1225156446376204440720569753E+01,
                     er7 = -0.4957589496572501915214079952E+00,
                     er8 = 0.1664377182454986536961530415E+01,
                     er9 = -0.3503288487499736816886487290E+00,
                     er10 = 0.3341791187130174790297318841E+00,
                     er11 = 0.8192320648511571246570742613E-01,
                     er12 = -0.2235530786388629525884427845E-01;
    const Eigen::Index n = y.size();
    double err = 0.0, err2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sk =
          1.0 / (opt_.atol +
                 opt_.rtol * std::max(std::abs(y(i)), std::abs(ynew_(i))));
      double sqr =
          std::abs(kcomb_(i) - bhh1 * k_[0](i) - bhh2 * k_[8](i) -
                   bhh3 * k_[2](i)) *
          sk;
      err2 += sqr * sqr;
      sqr = std::abs(er1 * k_[0](i) + er6 * k_[5](i) + er7 * k_[6](i) +
                     er8 * k_[7](i) + er9 * k_[8](i) + er10 * k_[9](i) +
                     er11 * k_[1](i) + er12 * k_[2](i)) *
            sk;
      err += sqr * sqr;
    }
    const double deno = err + 0.01 * err2;
    return err * std::sqrt(1.0 / (deno <= 0.0 ? double(n) : deno * double(n)));
  }

  // Two-phase starting step estimate; requires k_[0] = f(y).
  template <class Rhs>
  double hinit(Rhs&& f, const VecCd& y, double hmax) {
    const Eigen::Index n = y.size();
    double dnf = 0.0, dny = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sk = opt_.atol + opt_.rtol * std::abs(y(i));
      const double a = std::abs(k_[0](i)) / sk;
      dnf += a * a;
      const double b = std::abs(y(i)) / sk;
      dny += b * b;
    }
    double h = std::min(
        dnf <= 1e-10 || dny <= 1e-10 ? 1e-6 : 0.01 * std::sqrt(dny / dnf),
        hmax);

    ww_ = y + h * k_[0];
    f(ww_, k_[1]);
    double der2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sk = opt_.atol + opt_.rtol * std::abs(y(i));
      const double a = std::abs(k_[1](i) - k_[0](i)) / sk;
      der2 += a * a;
    }
    der2 = std::sqrt(der2) / h;

    // Pick h with h^8 * max(|f0|, |der2|) = 0.01.
    const double der12 = std::max(der2, std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3)
                                     : std::pow(0.01 / der12, 0.125);
    return std::min({100.0 * h, h1, hmax});
  }

  Rk8Options opt_;
  VecCd k_[10], ww_, ynew_, kcomb_;
};

}  // namespace rpoc
