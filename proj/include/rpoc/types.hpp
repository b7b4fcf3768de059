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

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace rpoc {

using cplx = std::complex<double>;
// Row-major so the matvec kernel walks CSR rows; Liouville vectors stay column-stacked.
using SparseCd = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using DenseCd = Eigen::MatrixXcd;
using VecCd = Eigen::VectorXcd;

constexpr cplx iu{0.0, 1.0};

enum class ErrorCode {
  invalid_multiplicity,
  bad_register,
  shape_mismatch,
  invalid_rate,
  bad_config,
  numeric_failure,
  expm_divergence,
  singular_drift,
  stiff_costate,
  alignment,
  io_failure,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_multiplicity: return "invalid_multiplicity";
    case ErrorCode::bad_register: return "bad_register";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::invalid_rate: return "invalid_rate";
    case ErrorCode::bad_config: return "bad_config";
    case ErrorCode::numeric_failure: return "numeric_failure";
    case ErrorCode::expm_divergence: return "expm_divergence";
    case ErrorCode::singular_drift: return "singular_drift";
    case ErrorCode::stiff_costate: return "stiff_costate";
    case ErrorCode::alignment: return "alignment";
    case ErrorCode::io_failure: return "io_failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rpoc
