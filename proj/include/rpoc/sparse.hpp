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
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "rpoc/types.hpp"

namespace rpoc {

inline SparseCd sparse_identity(Eigen::Index n) {
  SparseCd id(n, n);
  id.setIdentity();
  return id;
}

inline SparseCd kron(const SparseCd& a, const SparseCd& b) {
  SparseCd out(a.rows() * b.rows(), a.cols() * b.cols());
  out = Eigen::kroneckerProduct(a, b);
  out.makeCompressed();
  return out;
}

// Drops entries below 1e-15 in magnitude; assembly products leave such dust behind.
inline void prune_small(SparseCd& m, double tol = 1e-15) {
  m.prune([tol](Eigen::Index, Eigen::Index, const cplx& v) {
    return std::abs(v) > tol;
  });
  m.makeCompressed();
}

inline double one_norm(const SparseCd& m) {
  std::vector<double> col(static_cast<size_t>(m.cols()), 0.0);
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseCd::InnerIterator it(m, k); it; ++it)
      col[static_cast<size_t>(it.col())] += std::abs(it.value());
  double best = 0.0;
  for (double c : col) best = std::max(best, c);
  return best;
}

inline cplx sparse_trace(const SparseCd& m) {
  cplx tr = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseCd::InnerIterator it(m, k); it; ++it)
      if (it.row() == it.col()) tr += it.value();
  return tr;
}

inline SparseCd sparse_adjoint(const SparseCd& m) {
  SparseCd out = m.adjoint();
  out.makeCompressed();
  return out;
}

inline SparseCd sparse_transpose(const SparseCd& m) {
  SparseCd out = m.transpose();
  out.makeCompressed();
  return out;
}

// y += c * (m x). Raw CSR walk; the Taylor loop lives on this kernel.
inline void csr_acc_matvec(const SparseCd& m, cplx c, const cplx* x, cplx* y) {
  const auto* outer = m.outerIndexPtr();
  const auto* inner = m.innerIndexPtr();
  const cplx* vals = m.valuePtr();
  const Eigen::Index rows = m.rows();
  for (Eigen::Index r = 0; r < rows; ++r) {
    cplx acc = 0.0;
    for (auto p = outer[r]; p < outer[r + 1]; ++p) acc += vals[p] * x[inner[p]];
    y[r] += c * acc;
  }
}

inline double max_abs(const VecCd& v) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    best = std::max(best, std::abs(v[i]));
  return best;
}

}  // namespace rpoc
