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

#include <string>
#include <vector>

#include "rpoc/spin_model.hpp"

namespace rpoc {

// Column-stacking convention throughout: vec(A X B) = (B^T kron A) vec(X).

inline VecCd vectorize(const DenseCd& rho) {
  if (rho.rows() != rho.cols())
    throw Error(ErrorCode::shape_mismatch, "vectorize needs a square matrix");
  return Eigen::Map<const VecCd>(rho.data(), rho.size());
}

inline DenseCd unvectorize(const VecCd& v) {
  const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(double(v.size()))));
  if (d * d != v.size())
    throw Error(ErrorCode::shape_mismatch, "vector length is not a perfect square");
  return Eigen::Map<const DenseCd>(v.data(), d, d);
}

// -i[H, .] = -i(I kron H - H^T kron I)
inline SparseCd commutator_superop(const SparseCd& h) {
  if (h.rows() != h.cols())
    throw Error(ErrorCode::shape_mismatch, "Hamiltonian must be square");
  const SparseCd id = sparse_identity(h.rows());
  SparseCd out = -iu * (kron(id, h) - kron(sparse_transpose(h), id));
  prune_small(out);
  return out;
}

// -(k_b/2){P_S, .} - k_f .
inline SparseCd haberkorn_superop(double k_b, double k_f, const SparseCd& ps) {
  if (k_b < 0.0 || k_f < 0.0)
    throw Error(ErrorCode::invalid_rate, "recombination rates must be >= 0");
  const Eigen::Index d = ps.rows();
  const SparseCd id = sparse_identity(d);
  SparseCd out = -0.5 * k_b * (kron(id, ps) + kron(sparse_transpose(ps), id)) -
                 k_f * sparse_identity(d * d);
  prune_small(out);
  return out;
}

// D[A] = conj(A) kron A - (I kron A'A)/2 - ((A'A)^T kron I)/2
inline SparseCd dissipator_superop(const SparseCd& a) {
  if (a.rows() != a.cols())
    throw Error(ErrorCode::shape_mismatch, "collapse operator must be square");
  const SparseCd id = sparse_identity(a.rows());
  const SparseCd aa = sparse_adjoint(a) * a;
  SparseCd conj_a = a.conjugate();
  SparseCd out = kron(conj_a, a) -
                 0.5 * (kron(id, aa) + kron(sparse_transpose(aa), id));
  prune_small(out);
  return out;
}

enum class NoiseModel { none, STD, URF, CRF };

struct NoiseSpec {
  NoiseModel model = NoiseModel::none;
  double rate = 0.0;  // per us
};

inline NoiseModel parse_noise_model(const std::string& name) {
  if (name == "none") return NoiseModel::none;
  if (name == "STD") return NoiseModel::STD;
  if (name == "URF") return NoiseModel::URF;
  if (name == "CRF") return NoiseModel::CRF;
  throw Error(ErrorCode::bad_config, "unknown noise model: " + name);
}

inline SparseCd relaxation_superop(const NoiseSpec& spec, const SpinRegister& reg) {
  if (spec.rate < 0.0)
    throw Error(ErrorCode::invalid_rate, "noise rate must be >= 0");
  const Eigen::Index d = reg.dim();
  SparseCd out(d * d, d * d);
  if (spec.model == NoiseModel::none || spec.rate == 0.0) return out;

  const SpinOps half = spin_matrices(2);
  const SparseCd* axes[3] = {&half.sx, &half.sy, &half.sz};
  switch (spec.model) {
    case NoiseModel::STD:
      out = dissipator_superop(singlet_projector(reg));
      break;
    case NoiseModel::URF:
      for (int e = 0; e < 2; ++e)
        for (int a = 0; a < 3; ++a)
          out += dissipator_superop(embed_site(*axes[a], reg, e));
      break;
    case NoiseModel::CRF:
      for (int a = 0; a < 3; ++a)
        out += dissipator_superop(SparseCd(embed_site(*axes[a], reg, 0) +
                                           embed_site(*axes[a], reg, 1)));
      break;
    default:
      break;
  }
  out = spec.rate * out;
  prune_small(out);
  return out;
}

enum class ControlKind { coherent, incoherent };
enum class ControlFamily { coherent_x, CPC, UPC, UIC };

inline ControlFamily parse_control_family(const std::string& name) {
  if (name == "coherent-x") return ControlFamily::coherent_x;
  if (name == "CPC") return ControlFamily::CPC;
  if (name == "UPC") return ControlFamily::UPC;
  if (name == "UIC") return ControlFamily::UIC;
  throw Error(ErrorCode::bad_config, "unknown control family: " + name);
}

// generator is kept unscaled; the term entering the evolution is
// u * scale * generator with dimensionless u inside [lower, upper].
struct ControlChannel {
  ControlKind kind = ControlKind::coherent;
  SparseCd generator;
  double lower_bound = -1.0;
  double upper_bound = 1.0;
  double scale = 0.0;  // rad/us (coherent), 1/us (incoherent)
  std::string name;

  SparseCd scaled_generator() const { return SparseCd(scale * generator); }
};

inline std::vector<ControlChannel> control_channels(ControlFamily family,
                                                    const SpinRegister& reg,
                                                    double amplitude) {
  if (!std::isfinite(amplitude))
    throw Error(ErrorCode::bad_config, "control amplitude must be finite");
  const SpinOps half = spin_matrices(2);
  auto s1 = [&](const SparseCd& op) { return embed_site(op, reg, 0); };
  auto s2 = [&](const SparseCd& op) { return embed_site(op, reg, 1); };

  auto coherent = [&](const SparseCd& hdrive, const std::string& name) {
    ControlChannel ch;
    ch.kind = ControlKind::coherent;
    ch.generator = commutator_superop(hdrive);
    ch.lower_bound = -1.0;
    ch.upper_bound = 1.0;
    ch.scale = amplitude;
    ch.name = name;
    return ch;
  };
  auto incoherent = [&](const SparseCd& gen, const std::string& name) {
    if (amplitude < 0.0)
      throw Error(ErrorCode::invalid_rate, "gamma_max must be >= 0");
    ControlChannel ch;
    ch.kind = ControlKind::incoherent;
    ch.generator = gen;
    ch.lower_bound = 0.0;
    ch.upper_bound = 1.0;
    ch.scale = amplitude;
    ch.name = name;
    return ch;
  };

  std::vector<ControlChannel> out;
  switch (family) {
    case ControlFamily::coherent_x:
      out.push_back(coherent(SparseCd(s1(half.sx) + s2(half.sx)), "coh_x"));
      break;
    case ControlFamily::CPC: {
      const SparseCd sum_x = s1(half.sx) + s2(half.sx);
      const SparseCd sum_y = s1(half.sy) + s2(half.sy);
      const SparseCd sum_z = s1(half.sz) + s2(half.sz);
      out.push_back(incoherent(
          SparseCd(dissipator_superop(sum_x) + dissipator_superop(sum_y)),
          "cpc_eq"));
      out.push_back(incoherent(dissipator_superop(sum_z), "cpc_ax"));
      break;
    }
    case ControlFamily::UPC:
      out.push_back(incoherent(
          SparseCd(dissipator_superop(s1(half.sx)) + dissipator_superop(s2(half.sx)) +
                   dissipator_superop(s1(half.sy)) + dissipator_superop(s2(half.sy))),
          "upc_eq"));
      out.push_back(incoherent(
          SparseCd(dissipator_superop(s1(half.sz)) + dissipator_superop(s2(half.sz))),
          "upc_ax"));
      break;
    case ControlFamily::UIC:
      out.push_back(incoherent(
          SparseCd(dissipator_superop(s1(half.sx)) + dissipator_superop(s1(half.sy))),
          "uic_eq1"));
      out.push_back(incoherent(
          SparseCd(dissipator_superop(s2(half.sx)) + dissipator_superop(s2(half.sy))),
          "uic_eq2"));
      out.push_back(incoherent(dissipator_superop(s1(half.sz)), "uic_ax1"));
      out.push_back(incoherent(dissipator_superop(s2(half.sz)), "uic_ax2"));
      break;
  }
  for (auto& ch : out) prune_small(ch.generator);
  return out;
}

inline SparseCd drift_liouvillian(const SpinSystem& sys, const FieldSpec& field,
                                  double k_b, double k_f, const NoiseSpec& noise) {
  const SparseCd h = build_hamiltonian(sys, field);
  const SparseCd ps = singlet_projector(sys.reg);
  SparseCd out = commutator_superop(h) + haberkorn_superop(k_b, k_f, ps) +
                 relaxation_superop(noise, sys.reg);
  prune_small(out);
  return out;
}

// rho(0) = P_S / Tr(P_S), vectorized.
inline VecCd singlet_born_state(const SparseCd& ps) {
  const cplx tr = sparse_trace(ps);
  return vectorize(DenseCd(ps)) / tr.real();
}

}  // namespace rpoc
