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

// Dense reference implementations for small instances. Everything here
// assembles superoperators from the textbook formulas with dense Kronecker
// products and exponentiates with Eigen's dense expm, deliberately avoiding
// the sparse assembly and Taylor-action code paths it is used to check.

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "rpoc/superoperator.hpp"

namespace rpoc::oracle {

constexpr Eigen::Index kMaxDenseDim = 4096;

inline void check_dim(Eigen::Index d2) {
  if (d2 > kMaxDenseDim)
    throw Error(ErrorCode::bad_config,
                "dense oracle limited to Liouville dimension <= 4096");
}

inline DenseCd dkron(const DenseCd& a, const DenseCd& b) {
  return Eigen::kroneckerProduct(a, b);
}

inline DenseCd commutator(const DenseCd& h) {
  const Eigen::Index d = h.rows();
  check_dim(d * d);
  const DenseCd id = DenseCd::Identity(d, d);
  return -iu * (dkron(id, h) - dkron(h.transpose(), id));
}

inline DenseCd haberkorn(double k_b, double k_f, const DenseCd& ps) {
  const Eigen::Index d = ps.rows();
  check_dim(d * d);
  const DenseCd id = DenseCd::Identity(d, d);
  return -0.5 * k_b * (dkron(id, ps) + dkron(ps.transpose(), id)) -
         k_f * DenseCd::Identity(d * d, d * d);
}

inline DenseCd dissipator(const DenseCd& a) {
  const Eigen::Index d = a.rows();
  check_dim(d * d);
  const DenseCd id = DenseCd::Identity(d, d);
  const DenseCd aa = a.adjoint() * a;
  return dkron(a.conjugate(), a) -
         0.5 * (dkron(id, aa) + dkron(aa.transpose(), id));
}

inline DenseCd relaxation(const NoiseSpec& spec, const SpinRegister& reg) {
  const Eigen::Index d = reg.dim();
  check_dim(d * d);
  DenseCd out = DenseCd::Zero(d * d, d * d);
  if (spec.model == NoiseModel::none || spec.rate == 0.0) return out;
  const SpinOps half = spin_matrices(2);
  const SparseCd* axes[3] = {&half.sx, &half.sy, &half.sz};
  switch (spec.model) {
    case NoiseModel::STD:
      out = dissipator(DenseCd(singlet_projector(reg)));
      break;
    case NoiseModel::URF:
      for (int e = 0; e < 2; ++e)
        for (int a = 0; a < 3; ++a)
          out += dissipator(DenseCd(embed_site(*axes[a], reg, e)));
      break;
    case NoiseModel::CRF:
      for (int a = 0; a < 3; ++a)
        out += dissipator(DenseCd(embed_site(*axes[a], reg, 0)) +
                          DenseCd(embed_site(*axes[a], reg, 1)));
      break;
    default:
      break;
  }
  return spec.rate * out;
}

inline DenseCd drift(const SpinSystem& sys, const FieldSpec& field, double k_b,
                     double k_f, const NoiseSpec& noise) {
  const DenseCd h = DenseCd(build_hamiltonian(sys, field));
  const DenseCd ps = DenseCd(singlet_projector(sys.reg));
  return commutator(h) + haberkorn(k_b, k_f, ps) + relaxation(noise, sys.reg);
}

inline DenseCd expm(const DenseCd& l, double dt) {
  check_dim(l.rows());
  return DenseCd(l * dt).exp();
}

inline VecCd expm_apply(const DenseCd& l, const VecCd& v, double dt) {
  return expm(l, dt) * v;
}

}  // namespace rpoc::oracle
