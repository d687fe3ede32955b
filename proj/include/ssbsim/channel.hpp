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

#ifndef SSBSIM_CHANNEL_HPP
#define SSBSIM_CHANNEL_HPP

#include <stdexcept>

#include "ssbsim/common.hpp"
#include "ssbsim/radio.hpp"

namespace ssbsim {

/// Ground-truth kinematic state and radar cross-section of one UAV.
struct UavTruth {
  Vec3 position = Vec3::Zero();  // m, BS at origin
  Vec3 velocity = Vec3::Zero();  // m/s
  double rcs = 1.0;              // m^2
};

/// Monostatic echo parameters of one target: two-way gain, delay, Doppler, angles.
struct SensingTargetParams {
  cxd gain;              // alpha, two-way amplitude with random reflection phase
  double delay_s = 0.0;  // tau = 2r/c
  double doppler_hz = 0.0;
  double elevation_rad = 0.0;
  double azimuth_rad = 0.0;
  double range_m = 0.0;
  double radial_velocity_mps = 0.0;
};

// Radar-equation amplitude: |alpha| = sqrt(c^2 sigma / ((4 pi)^3 r^4 fc^2)).
inline double radar_amplitude(double range_m, double rcs, const RadioConfig& radio) {
  const double c2 = radio.c0 * radio.c0;
  const double denom = std::pow(4.0 * kPi, 3) * std::pow(range_m, 4) * radio.fc_hz * radio.fc_hz;
  return std::sqrt(c2 * rcs / denom);
}

/// Converts a ground-truth UAV into echo parameters. The reflection phase is
/// uniform in [0, 2 pi), deterministic in the seed.
inline SensingTargetParams truth_to_params(const UavTruth& u, const RadioConfig& radio,
                                           uint64_t phase_seed) {
  const double r = u.position.norm();
  if (r <= 0.0) throw std::domain_error("truth_to_params: target at the array origin");
  const double xy = std::hypot(u.position.x(), u.position.y());
  if (xy <= 0.0)
    throw std::domain_error("truth_to_params: target on the array axis (|elevation| = pi/2)");
  SensingTargetParams p;
  p.range_m = r;
  p.radial_velocity_mps = u.position.dot(u.velocity) / r;
  p.elevation_rad = std::asin(u.position.z() / r);
  p.azimuth_rad = std::atan2(u.position.y(), u.position.x());
  p.delay_s = 2.0 * r / radio.c0;
  p.doppler_hz = 2.0 * p.radial_velocity_mps * radio.fc_hz / radio.c0;
  auto rng = make_rng(phase_seed, 0xA1);
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * kPi);
  p.gain = std::polar(radar_amplitude(r, u.rcs, radio), uphase(rng));
  return p;
}

/// Per-RF-chain received SSB grid for one burst:
///   y_p(n, m) = sum_l alpha_l e^{-j 2 pi n df tau_l} e^{+j 2 pi m To fd_l}
///               (w_rx_p^H a_l)(a_l^H w_tx) payload(n, m) + noise,
/// with circular complex Gaussian noise of the given power on every cell.
/// Noise lives in the beamspace domain (covariance noise_power * I across
/// chains), which is exact for an orthonormal receive combiner.
inline ChainStack sensing_echo(const std::vector<SensingTargetParams>& targets,
                               const SsbGrid& grid, const UpaConfig& rx_upa,
                               const RadioConfig& radio, const CxVec& w_tx, const CxMat& w_rx_rf,
                               double noise_power, uint64_t seed) {
  const int n_rf = static_cast<int>(w_rx_rf.cols());
  ChainStack rx(n_rf, CxMat::Zero(grid.n_sc, grid.n_sym));

  for (size_t l = 0; l < targets.size(); ++l) {
    const auto& t = targets[l];
    if (!(std::abs(t.elevation_rad) < kPi / 2.0))
      throw std::domain_error("sensing_echo: target elevation outside (-pi/2, pi/2)");
    const CxVec a = steering_vector(rx_upa, radio, t.elevation_rad, t.azimuth_rad);
    const cxd tx_gain = a.dot(w_tx);             // a^H w_tx
    const CxVec rx_gain = w_rx_rf.adjoint() * a; // per-chain W^H a
    const cxd base = t.gain * tx_gain;
    const cxd dphi_sc = std::polar(1.0, -2.0 * kPi * radio.delta_f_hz * t.delay_s);
    const cxd dphi_sym = std::polar(1.0, 2.0 * kPi * radio.symbol_s * t.doppler_hz);
    cxd sym_phase(1.0, 0.0);
    for (int m = 0; m < grid.n_sym; ++m) {
      cxd sc_phase(1.0, 0.0);
      for (int n = 0; n < grid.n_sc; ++n) {
        if (grid.mask(n, m)) {
          const cxd cell = base * sc_phase * sym_phase * grid.payload(n, m);
          for (int p = 0; p < n_rf; ++p) rx[p](n, m) += rx_gain(p) * cell;
        }
        sc_phase *= dphi_sc;
      }
      sym_phase *= dphi_sym;
    }
  }

  if (noise_power > 0.0) {
    auto rng = make_rng(seed, 0xE0);
    std::normal_distribution<double> g(0.0, std::sqrt(noise_power / 2.0));
    for (int p = 0; p < n_rf; ++p)
      for (int m = 0; m < grid.n_sym; ++m)
        for (int n = 0; n < grid.n_sc; ++n) rx[p](n, m) += cxd(g(rng), g(rng));
  }
  return rx;
}

/// Single LoS downlink channel h = alpha * a(phi, theta).
struct CommChannel {
  CxVec h;
  cxd gain;
  double elevation_rad = 0.0;
  double azimuth_rad = 0.0;
  double range_m = 0.0;
};

// One-way free-space amplitude lambda/(4 pi r) with a seed-deterministic
// uniform phase; |gain|^2 matches the path loss factor (lambda/(4 pi r))^2.
inline CommChannel make_comm_channel(const UpaConfig& tx_upa, const RadioConfig& radio,
                                     double range_m, double elevation_rad, double azimuth_rad,
                                     uint64_t seed) {
  if (range_m <= 0.0) throw std::domain_error("make_comm_channel: range must be > 0");
  CommChannel ch;
  ch.range_m = range_m;
  ch.elevation_rad = elevation_rad;
  ch.azimuth_rad = azimuth_rad;
  auto rng = make_rng(seed, 0xC0);
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * kPi);
  ch.gain = std::polar(radio.wavelength() / (4.0 * kPi * range_m), uphase(rng));
  ch.h = ch.gain * steering_vector(tx_upa, radio, elevation_rad, azimuth_rad);
  return ch;
}

/// Instantaneous SINR of user k under beamforming matrix W (columns = users):
///   |h^H w_k|^2 / (|h^H sum_{i != k} w_i|^2 + noise_var).
inline double comm_receive_sinr(const CommChannel& ch, const CxMat& w_columns, int k,
                                double noise_var) {
  if (w_columns.cols() < 1) throw std::invalid_argument("comm_receive_sinr: needs K >= 1 columns");
  const cxd sig = ch.h.dot(w_columns.col(k));  // h^H w_k
  cxd mui(0.0, 0.0);
  for (int i = 0; i < w_columns.cols(); ++i)
    if (i != k) mui += ch.h.dot(w_columns.col(i));
  return std::norm(sig) / (std::norm(mui) + noise_var);
}

}  // namespace ssbsim

#endif  // SSBSIM_CHANNEL_HPP
