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

#include <vector>

#include "rpoc/sparse.hpp"
#include "rpoc/types.hpp"

namespace rpoc {

// Sparse matrix with the scalars the Taylor propagator keeps asking for.
struct PreparedMatrix {
  const SparseCd* m = nullptr;  // not owned; must outlive users
  double norm1 = 0.0;
  cplx tr = 0.0;
};

inline PreparedMatrix prepare(const SparseCd& m) {
  return PreparedMatrix{&m, one_norm(m), sparse_trace(m)};
}

// Abstract operator the propagator exponentiates. norm1_bound may
// overestimate the true 1-norm; trace must be exact.
class LinOp {
 public:
  virtual ~LinOp() = default;
  virtual Eigen::Index dim() const = 0;
  virtual void apply(const cplx* x, cplx* y) const = 0;  // y = A x
  virtual double norm1_bound() const = 0;
  virtual cplx trace() const = 0;
};

// A = sum_i c_i M_i over a common square dimension n, with real c_i.
// With a flux row the operator acts on length n+1 vectors as the block
// [[A, 0], [f^T, 0]]; the trailing component accumulates <f, x> without
// feeding back, which is how yields ride along with the state.
class SumOp : public LinOp {
 public:
  explicit SumOp(Eigen::Index n) : n_(n) {}

  void add_term(double c, const PreparedMatrix& pm) {
    if (pm.m->rows() != n_ || pm.m->cols() != n_)
      throw Error(ErrorCode::shape_mismatch, "term dimension mismatch");
    if (c != 0.0) terms_.push_back({c, pm});
  }

  void set_flux_row(const VecCd* flux) {
    if (flux && flux->size() != n_)
      throw Error(ErrorCode::shape_mismatch, "flux row dimension mismatch");
    flux_ = flux;
    flux_max_ = 0.0;
    if (flux_) flux_max_ = max_abs(*flux_);
  }

  Eigen::Index dim() const override { return flux_ ? n_ + 1 : n_; }

  void apply(const cplx* x, cplx* y) const override {
    std::fill(y, y + n_, cplx(0.0));
    for (const auto& t : terms_) csr_acc_matvec(*t.pm.m, t.c, x, y);
    if (flux_) {
      cplx acc = 0.0;
      const cplx* f = flux_->data();
      for (Eigen::Index i = 0; i < n_; ++i) acc += f[i] * x[i];
      y[n_] = acc;
    }
  }

  double norm1_bound() const override {
    double b = 0.0;
    for (const auto& t : terms_) b += std::abs(t.c) * t.pm.norm1;
    return b + flux_max_;
  }

  cplx trace() const override {
    cplx tr = 0.0;
    for (const auto& t : terms_) tr += t.c * t.pm.tr;
    return tr;
  }

 private:
  struct Term {
    double c;
    PreparedMatrix pm;
  };
  Eigen::Index n_;
  std::vector<Term> terms_;
  const VecCd* flux_ = nullptr;
  double flux_max_ = 0.0;
};

// Block-triangular operator [[A, E], [0, A]]. exp of it carries the
// directional derivative of exp(A dt) along E in its upper-right block,
// so applying it to (0, v) yields (D_E exp(A dt) v, exp(A dt) v).
class FrechetOp : public LinOp {
 public:
  FrechetOp(const LinOp& a, const LinOp& e) : a_(a), e_(e) {
    if (a.dim() != e.dim())
      throw Error(ErrorCode::shape_mismatch, "Frechet block dimension mismatch");
  }

  Eigen::Index dim() const override { return 2 * a_.dim(); }

  void apply(const cplx* x, cplx* y) const override {
    const Eigen::Index n = a_.dim();
    a_.apply(x, y);
    scratch_.resize(n);
    e_.apply(x + n, scratch_.data());
    for (Eigen::Index i = 0; i < n; ++i) y[i] += scratch_[i];
    a_.apply(x + n, y + n);
  }

  double norm1_bound() const override { return a_.norm1_bound() + e_.norm1_bound(); }
  cplx trace() const override { return 2.0 * a_.trace(); }

 private:
  const LinOp& a_;
  const LinOp& e_;
  mutable std::vector<cplx> scratch_;
};

}  // namespace rpoc
