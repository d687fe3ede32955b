// SPDX-License-Identifier: Apache-2.0
//
// ssbsim: SSB-based monostatic sensing, EKF target tracking, and
// uncertainty-aware multi-user beamforming for hybrid-array base stations.
// Copyright (C) 2026 the ssbsim authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------
//
// First-order operator-splitting solver for the small structured conic
// programs behind the beamformer optimization:
//
//   minimize    c^T x - sum_i kappa_i ln(x_log,i)
//   subject to  A x = b,
//               each Hermitian block of x PSD, x_pos >= 0, x_free free.
//
// Hermitian matrices travel through the real isometry svec with
// <svec(A), svec(B)> = Re tr(A B); the PSD projection is a complex Hermitian
// eigendecomposition with eigenvalue clamping. Both proximal steps are closed
// form, so one ADMM iteration costs one eigendecomposition per block plus
// O(dim) vector work.

#ifndef SSBSIM_SDP_HPP
#define SSBSIM_SDP_HPP

#include <stdexcept>
#include <utility>

#include "ssbsim/common.hpp"

namespace ssbsim::sdp {

/// Real vectorization of a Hermitian matrix: diagonal first, then
/// sqrt(2)*(Re, Im) of the upper triangle. Preserves inner products:
/// <svec(A), svec(B)> = Re tr(A B).
inline Vec svec(const CxMat& h) {
  const int n = static_cast<int>(h.rows());
  Vec v(n * n);
  int idx = 0;
  for (int i = 0; i < n; ++i) v(idx++) = h(i, i).real();
  const double s = std::sqrt(2.0);
  for (int j = 1; j < n; ++j)
    for (int i = 0; i < j; ++i) {
      v(idx++) = s * h(i, j).real();
      v(idx++) = s * h(i, j).imag();
    }
  return v;
}

inline CxMat smat(const Eigen::Ref<const Vec>& v, int n) {
  CxMat h(n, n);
  int idx = 0;
  for (int i = 0; i < n; ++i) h(i, i) = v(idx++);
  const double s = 1.0 / std::sqrt(2.0);
  for (int j = 1; j < n; ++j)
    for (int i = 0; i < j; ++i) {
      const double re = v(idx++) * s;
      const double im = v(idx++) * s;
      h(i, j) = cxd(re, im);
      h(j, i) = cxd(re, -im);
    }
  return h;
}

enum class SolveStatus { kOptimal, kMaxIters, kInfeasible };

struct Settings {
  double eps_abs = 1e-9;
  double eps_rel = 1e-9;
  int max_iters = 50000;
  double rho = 1.0;
  double over_relax = 1.6;
  int check_every = 25;
  bool adaptive_rho = true;
};

/// Variable layout: [svec(H_1) .. svec(H_K) | log entries | nonneg | free].
struct ConicProblem {
  int psd_dim = 0;
  int n_blocks = 0;
  Vec log_weights;  // kappa_i, one per log entry
  int n_pos = 0;
  int n_free = 0;
  Mat a;
  Vec b;
  Vec c;

  int block_size() const { return psd_dim * psd_dim; }
  int n_log() const { return static_cast<int>(log_weights.size()); }
  int dim() const { return n_blocks * block_size() + n_log() + n_pos + n_free; }
  int log_offset() const { return n_blocks * block_size(); }
  int pos_offset() const { return log_offset() + n_log(); }
  int free_offset() const { return pos_offset() + n_pos; }
};

struct ConicResult {
  Vec x;
  SolveStatus status = SolveStatus::kOptimal;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iters = 0;
};

/// Two-block ADMM with over-relaxation and residual-balanced step size.
/// Instances hold the dual/cone state, so repeated solves of a slowly varying
/// problem warm-start automatically.
class ConicSolver {
 public:
  void reset() { warm_ = false; }

  ConicResult solve(const ConicProblem& p, const Settings& s) {
    const int d = p.dim();
    const int m = static_cast<int>(p.a.rows());
    if (p.a.cols() != d || p.b.size() != m || p.c.size() != d)
      throw std::invalid_argument("ConicSolver: inconsistent problem dimensions");

    if (!warm_ || z_.size() != d) {
      z_ = Vec::Zero(d);
      lambda_ = Vec::Zero(d);
      rho_ = s.rho;
      warm_ = true;
    }

    // Row equilibration: rescaling (A, b) rows leaves the affine set
    // unchanged but keeps A A^T well conditioned for extreme constraint data.
    Mat a_eq = p.a;
    Vec b_eq = p.b;
    for (int i = 0; i < m; ++i) {
      const double norm = std::max(a_eq.row(i).norm(), 1e-300);
      a_eq.row(i) /= norm;
      b_eq(i) /= norm;
    }
    const Mat aat = a_eq * a_eq.transpose();
    const Eigen::LDLT<Mat> aat_fac(aat);
    const auto project_affine = [&](const Vec& y) -> Vec {
      return y - a_eq.transpose() * aat_fac.solve(a_eq * y - b_eq);
    };

    ConicResult res;
    const double sqrt_d = std::sqrt(static_cast<double>(d));
    Vec x(d), xh(d), z_prev(d);
    for (int it = 1; it <= s.max_iters; ++it) {
      x = project_affine(z_ - lambda_ - p.c / rho_);
      xh = s.over_relax * x + (1.0 - s.over_relax) * z_;
      z_prev = z_;
      Vec w = xh + lambda_;

      // PSD blocks.
      for (int k = 0; k < p.n_blocks; ++k) {
        const int off = k * p.block_size();
        const CxMat h = smat(w.segment(off, p.block_size()), p.psd_dim);
        Eigen::SelfAdjointEigenSolver<CxMat> es(h);
        const CxMat proj = es.eigenvectors() *
                           es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                           es.eigenvectors().adjoint();
        w.segment(off, p.block_size()) = svec(proj);
      }
      // Log barrier-like terms: prox of -kappa ln(u).
      for (int i = 0; i < p.n_log(); ++i) {
        const int off = p.log_offset() + i;
        const double v = w(off);
        w(off) = 0.5 * (v + std::sqrt(v * v + 4.0 * p.log_weights(i) / rho_));
      }
      // Nonnegative slacks.
      for (int i = 0; i < p.n_pos; ++i) {
        const int off = p.pos_offset() + i;
        w(off) = std::max(0.0, w(off));
      }
      // Free entries pass through.
      z_ = w;
      lambda_ += xh - z_;

      if (it % s.check_every == 0 || it == s.max_iters) {
        const double r_norm = (x - z_).norm();
        const double d_norm = rho_ * (z_ - z_prev).norm();
        const double eps_pri =
            s.eps_abs * sqrt_d + s.eps_rel * std::max(x.norm(), z_.norm());
        const double eps_dual = s.eps_abs * sqrt_d + s.eps_rel * rho_ * lambda_.norm();
        if (r_norm <= eps_pri && d_norm <= eps_dual) {
          res.x = z_;
          res.status = SolveStatus::kOptimal;
          res.primal_residual = r_norm;
          res.dual_residual = d_norm;
          res.iters = it;
          return res;
        }
        if (s.adaptive_rho && it % (4 * s.check_every) == 0) {
          if (r_norm > 10.0 * d_norm && rho_ < 1e6) {
            rho_ *= 2.0;
            lambda_ /= 2.0;
          } else if (d_norm > 10.0 * r_norm && rho_ > 1e-6) {
            rho_ /= 2.0;
            lambda_ *= 2.0;
          }
        }
      }
    }
    res.x = z_;
    res.status = SolveStatus::kMaxIters;
    res.primal_residual = (x - z_).norm();
    res.dual_residual = rho_ * (z_ - z_prev).norm();
    res.iters = s.max_iters;
    return res;
  }

 private:
  Vec z_, lambda_;
  double rho_ = 1.0;
  bool warm_ = false;
};

}  // namespace ssbsim::sdp

#endif  // SSBSIM_SDP_HPP
