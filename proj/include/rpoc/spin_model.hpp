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

#include <cmath>
#include <numbers>
#include <vector>

#include "rpoc/spin_algebra.hpp"

namespace rpoc {

// Internal units: rad/us for every frequency, us for time, mT for fields.
// Field-unit couplings convert through gamma_e, MHz couplings through 2*pi.
constexpr double kGammaE = 176.0859;  // rad us^-1 mT^-1
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct HyperfineCoupling {
  int electron = 1;          // 1 or 2
  Eigen::Matrix3d tensor;    // rad/us
  int nucleus_multiplicity = 2;
};

struct FieldSpec {
  double b0 = 0.0;   // mT
  double theta = 0.0;  // rad, [0, pi]
  double phi = 0.0;    // rad
};

inline void validate_field(const FieldSpec& f) {
  if (!(f.b0 >= 0.0) || !std::isfinite(f.b0))
    throw Error(ErrorCode::bad_config, "B0 must be finite and >= 0");
  if (!(f.theta >= 0.0 && f.theta <= std::numbers::pi))
    throw Error(ErrorCode::bad_config, "theta must lie in [0, pi]");
  if (!std::isfinite(f.phi))
    throw Error(ErrorCode::bad_config, "phi must be finite");
}

// Electrons occupy register sites 0 and 1; nucleus j of the hyperfine list
// occupies site 2 + j in listing order.
struct SpinSystem {
  std::vector<HyperfineCoupling> hyperfines;
  double j_ex = 0.0;         // rad/us
  double gamma_e = kGammaE;  // rad/us/mT
  SpinRegister reg;
};

inline SpinSystem make_spin_system(std::vector<HyperfineCoupling> hyperfines,
                                   double j_ex, double gamma_e = kGammaE) {
  if (!(gamma_e > 0.0))
    throw Error(ErrorCode::bad_config, "gamma_e must be positive");
  if (!std::isfinite(j_ex))
    throw Error(ErrorCode::bad_config, "j_ex must be finite");
  std::vector<int> mults = {2, 2};
  for (const auto& hf : hyperfines) {
    if (hf.electron != 1 && hf.electron != 2)
      throw Error(ErrorCode::bad_config, "hyperfine electron index must be 1 or 2");
    if (hf.nucleus_multiplicity < 2)
      throw Error(ErrorCode::bad_config, "nucleus multiplicity must be >= 2");
    if (!hf.tensor.allFinite())
      throw Error(ErrorCode::bad_config, "hyperfine tensor must be finite");
    mults.push_back(hf.nucleus_multiplicity);
  }
  SpinSystem sys;
  sys.hyperfines = std::move(hyperfines);
  sys.j_ex = j_ex;
  sys.gamma_e = gamma_e;
  sys.reg = SpinRegister(std::move(mults));
  return sys;
}

// H = sum_i omega.S_i + sum_{i,j} S_i.A_{i,j}.I_j - 2 j_ex S_1.S_2 with
// omega = gamma_e B0 (sin t cos p, sin t sin p, cos t) shared by both electrons.
inline SparseCd build_hamiltonian(const SpinSystem& sys, const FieldSpec& field) {
  validate_field(field);
  const SpinRegister& reg = sys.reg;
  const Eigen::Index d = reg.dim();
  SparseCd h(d, d);

  const double st = std::sin(field.theta), ct = std::cos(field.theta);
  const Eigen::Vector3d omega = sys.gamma_e * field.b0 *
      Eigen::Vector3d(st * std::cos(field.phi), st * std::sin(field.phi), ct);
  const SpinOps half = spin_matrices(2);
  const SparseCd* half_ops[3] = {&half.sx, &half.sy, &half.sz};
  for (int e = 0; e < 2; ++e)
    for (int a = 0; a < 3; ++a)
      if (omega[a] != 0.0) h += omega[a] * embed_site(*half_ops[a], reg, e);

  for (size_t j = 0; j < sys.hyperfines.size(); ++j) {
    const HyperfineCoupling& hf = sys.hyperfines[j];
    const int e_site = hf.electron - 1;
    const int n_site = 2 + static_cast<int>(j);
    const SpinOps nuc = spin_matrices(hf.nucleus_multiplicity);
    const SparseCd* nuc_ops[3] = {&nuc.sx, &nuc.sy, &nuc.sz};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (hf.tensor(a, b) != 0.0) {
          const SparseCd si = embed_site(*half_ops[a], reg, e_site) *
                              embed_site(*nuc_ops[b], reg, n_site);
          h += hf.tensor(a, b) * si;
        }
  }

  if (sys.j_ex != 0.0) h -= 2.0 * sys.j_ex * spin_dot(reg, 0, 1);
  prune_small(h);
  return h;
}

// Seven-spin pair: electron 1 with isotropic spin-1/2 nuclei at 0.2, 0.5 and
// 1.0 mT, electron 2 at 0.2 and 0.3 mT, exchange j_ex/(2 pi) = 1 MHz.
inline SpinSystem masuzawa7() {
  auto iso = [](int electron, double a_mT) {
    HyperfineCoupling hf;
    hf.electron = electron;
    hf.tensor = (kGammaE * a_mT) * Eigen::Matrix3d::Identity();
    hf.nucleus_multiplicity = 2;
    return hf;
  };
  return make_spin_system(
      {iso(1, 0.2), iso(1, 0.5), iso(1, 1.0), iso(2, 0.2), iso(2, 0.3)},
      kTwoPi * 1.0);
}

// One-nitrogen pair: spin-1 nucleus on electron 1 with axial tensor
// 2 pi diag(-2.6, -2.6, 49.2) rad/us, electron 2 bare.
inline SpinSystem fadh_z(double j_ex) {
  HyperfineCoupling hf;
  hf.electron = 1;
  hf.tensor = kTwoPi * Eigen::Vector3d(-2.6, -2.6, 49.2).asDiagonal();
  hf.nucleus_multiplicity = 3;
  return make_spin_system({hf}, j_ex);
}

}  // namespace rpoc
