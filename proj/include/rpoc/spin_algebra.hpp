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

#include <numeric>
#include <vector>

#include "rpoc/sparse.hpp"
#include "rpoc/types.hpp"

namespace rpoc {

// Angular momentum operators for one site of multiplicity m = 2s+1,
// basis ordered by descending magnetic quantum number (s, s-1, ..., -s).
struct SpinOps {
  SparseCd sx, sy, sz, sp, sm;
};

inline SpinOps spin_matrices(int multiplicity) {
  if (multiplicity < 2)
    throw Error(ErrorCode::invalid_multiplicity,
                "multiplicity must be >= 2, got " + std::to_string(multiplicity));
  const int n = multiplicity;
  const double s = 0.5 * (n - 1);
  std::vector<Eigen::Triplet<cplx>> tz, tp;
  tz.reserve(static_cast<size_t>(n));
  tp.reserve(static_cast<size_t>(n - 1));
  for (int r = 0; r < n; ++r) {
    const double mz = s - r;
    if (mz != 0.0) tz.emplace_back(r, r, cplx(mz, 0.0));
    if (r + 1 < n) {
      // S+ |s, mz-1> = sqrt(s(s+1) - (mz-1)mz) |s, mz>
      const double c = std::sqrt(s * (s + 1) - (mz - 1) * mz);
      tp.emplace_back(r, r + 1, cplx(c, 0.0));
    }
  }
  SpinOps ops;
  ops.sz = SparseCd(n, n);
  ops.sz.setFromTriplets(tz.begin(), tz.end());
  ops.sp = SparseCd(n, n);
  ops.sp.setFromTriplets(tp.begin(), tp.end());
  ops.sm = sparse_adjoint(ops.sp);
  ops.sx = 0.5 * (ops.sp + ops.sm);
  ops.sy = (-0.5 * iu) * (ops.sp - ops.sm);
  ops.sx.makeCompressed();
  ops.sy.makeCompressed();
  ops.sz.makeCompressed();
  return ops;
}

// Composite register; sites 0 and 1 are the electron pair by convention.
struct SpinRegister {
  std::vector<int> multiplicities;

  SpinRegister() = default;
  explicit SpinRegister(std::vector<int> ms) : multiplicities(std::move(ms)) {
    if (multiplicities.empty())
      throw Error(ErrorCode::bad_register, "register needs at least one site");
    for (int m : multiplicities)
      if (m < 2)
        throw Error(ErrorCode::bad_register,
                    "site multiplicity must be >= 2, got " + std::to_string(m));
  }

  int sites() const { return static_cast<int>(multiplicities.size()); }
  Eigen::Index dim() const {
    Eigen::Index d = 1;
    for (int m : multiplicities) d *= m;
    return d;
  }
};

// I x ... x op x ... x I with op at the given site.
inline SparseCd embed_site(const SparseCd& op, const SpinRegister& reg, int site) {
  if (site < 0 || site >= reg.sites())
    throw Error(ErrorCode::bad_register, "site index out of range");
  const int m = reg.multiplicities[static_cast<size_t>(site)];
  if (op.rows() != m || op.cols() != m)
    throw Error(ErrorCode::shape_mismatch, "operator does not match site multiplicity");
  Eigen::Index pre = 1, post = 1;
  for (int i = 0; i < site; ++i) pre *= reg.multiplicities[static_cast<size_t>(i)];
  for (int i = site + 1; i < reg.sites(); ++i)
    post *= reg.multiplicities[static_cast<size_t>(i)];
  SparseCd out = kron(kron(sparse_identity(pre), op), sparse_identity(post));
  prune_small(out);
  return out;
}

// S_a . S_b summed over x, y, z.
inline SparseCd spin_dot(const SpinRegister& reg, int site_a, int site_b) {
  const SpinOps a = spin_matrices(reg.multiplicities[static_cast<size_t>(site_a)]);
  const SpinOps b = spin_matrices(reg.multiplicities[static_cast<size_t>(site_b)]);
  SparseCd out =
      embed_site(a.sx, reg, site_a) * embed_site(b.sx, reg, site_b) +
      embed_site(a.sy, reg, site_a) * embed_site(b.sy, reg, site_b) +
      embed_site(a.sz, reg, site_a) * embed_site(b.sz, reg, site_b);
  prune_small(out);
  return out;
}

// P_S = I/4 - S1.S2 for a spin-1/2 pair; complements P_T = 3I/4 + S1.S2.
inline SparseCd singlet_projector(const SpinRegister& reg, int e1 = 0, int e2 = 1) {
  if (e1 == e2 || reg.multiplicities[static_cast<size_t>(e1)] != 2 ||
      reg.multiplicities[static_cast<size_t>(e2)] != 2)
    throw Error(ErrorCode::bad_register,
                "singlet projector needs two distinct spin-1/2 sites");
  SparseCd out = 0.25 * sparse_identity(reg.dim()) - spin_dot(reg, e1, e2);
  prune_small(out);
  return out;
}

}  // namespace rpoc
