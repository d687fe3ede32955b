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

#ifndef SSBSIM_RADIO_HPP
#define SSBSIM_RADIO_HPP

#include <stdexcept>
#include <string>

#include "ssbsim/common.hpp"

namespace ssbsim {

/// Carrier and OFDM numerology.
struct RadioConfig {
  double fc_hz = 28e9;          // carrier frequency
  double delta_f_hz = 120e3;    // subcarrier spacing
  double symbol_s = 8.9e-6;     // OFDM symbol duration incl. cyclic prefix
  double c0 = kSpeedOfLight;

  double wavelength() const { return c0 / fc_hz; }

  void validate() const {
    if (fc_hz <= 0.0) throw std::invalid_argument("RadioConfig: fc_hz must be > 0");
    if (delta_f_hz <= 0.0) throw std::invalid_argument("RadioConfig: delta_f_hz must be > 0");
    if (symbol_s < 1.0 / delta_f_hz)
      throw std::invalid_argument("RadioConfig: symbol_s shorter than 1/delta_f");
  }
};

/// Uniform planar array in the y-z plane with per-axis RF chain counts.
struct UpaConfig {
  int n_y = 8;
  int n_z = 4;
  int n_rf_y = 4;
  int n_rf_z = 2;
  double d_y = 0.0;  // element spacing (m); half wavelength when built via make()
  double d_z = 0.0;

  int n_elements() const { return n_y * n_z; }
  int n_rf() const { return n_rf_y * n_rf_z; }

  static UpaConfig make(int n_y, int n_z, int n_rf_y, int n_rf_z, const RadioConfig& radio) {
    UpaConfig c;
    c.n_y = n_y;
    c.n_z = n_z;
    c.n_rf_y = n_rf_y;
    c.n_rf_z = n_rf_z;
    c.d_y = c.d_z = radio.wavelength() / 2.0;
    c.validate();
    return c;
  }

  void validate() const {
    if (n_y < 1 || n_z < 1) throw std::invalid_argument("UpaConfig: element counts must be >= 1");
    if (n_rf_y < 1 || n_rf_z < 1 || n_rf_y > n_y || n_rf_z > n_z)
      throw std::invalid_argument("UpaConfig: RF chain counts must be in [1, axis elements]");
    if (d_y <= 0.0 || d_z <= 0.0) throw std::invalid_argument("UpaConfig: spacings must be > 0");
  }
};

/// Horizontal steering factor a_y(phi, theta), length n_y.
inline CxVec steering_y(const UpaConfig& upa, const RadioConfig& radio, double phi, double theta) {
  const double lambda = radio.wavelength();
  const double psi = 2.0 * kPi * upa.d_y * std::sin(theta) * std::cos(phi) / lambda;
  CxVec a(upa.n_y);
  for (int q = 0; q < upa.n_y; ++q) a(q) = std::polar(1.0, psi * q);
  return a;
}

/// Vertical steering factor a_z(phi), length n_z.
inline CxVec steering_z(const UpaConfig& upa, const RadioConfig& radio, double phi) {
  const double lambda = radio.wavelength();
  const double psi = 2.0 * kPi * upa.d_z * std::sin(phi) / lambda;
  CxVec a(upa.n_z);
  for (int p = 0; p < upa.n_z; ++p) a(p) = std::polar(1.0, psi * p);
  return a;
}

/// 2D steering vector a(phi, theta) = a_z(phi) kron a_y(phi, theta).
/// Element (p*n_y + q) = exp(j 2 pi (p d_z sin(phi) + q d_y sin(theta) cos(phi)) / lambda).
inline CxVec steering_vector(const UpaConfig& upa, const RadioConfig& radio, double phi,
                             double theta) {
  if (!(std::abs(phi) < kPi / 2.0))
    throw std::invalid_argument("steering_vector: |phi| must be < pi/2");
  const double lambda = radio.wavelength();
  const double psi_z = 2.0 * kPi * upa.d_z * std::sin(phi) / lambda;
  const double psi_y = 2.0 * kPi * upa.d_y * std::sin(theta) * std::cos(phi) / lambda;
  CxVec a(upa.n_elements());
  for (int p = 0; p < upa.n_z; ++p)
    for (int q = 0; q < upa.n_y; ++q) a(p * upa.n_y + q) = std::polar(1.0, psi_z * p + psi_y * q);
  return a;
}

/// One SSB resource grid: 240 subcarriers x 4 symbols, discontinuous occupancy,
/// unit-modulus QPSK payload on occupied cells and exact zeros elsewhere.
struct SsbGrid {
  int n_sc = 240;
  int n_sym = 4;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // n_sc x n_sym
  CxMat payload;                                            // n_sc x n_sym

  int occupied_count() const { return static_cast<int>(mask.count()); }
};

// Occupancy layout (subcarrier ranges are half-open, 0-based):
//   symbol 0: [56, 183)                      127 cells
//   symbol 1: [0, 240)                       240 cells
//   symbol 2: [0, 48) + [56, 183) + [192, 240)  223 cells
//   symbol 3: [0, 240)                       240 cells
// Total 830 occupied cells.
inline SsbGrid build_ssb_grid(uint64_t seed) {
  SsbGrid g;
  g.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(g.n_sc, g.n_sym, false);
  auto fill = [&](int sym, int lo, int hi) {
    for (int n = lo; n < hi; ++n) g.mask(n, sym) = true;
  };
  fill(0, 56, 183);
  fill(1, 0, 240);
  fill(2, 0, 48);
  fill(2, 56, 183);
  fill(2, 192, 240);
  fill(3, 0, 240);

  g.payload = CxMat::Zero(g.n_sc, g.n_sym);
  for (int m = 0; m < g.n_sym; ++m) {
    for (int n = 0; n < g.n_sc; ++n) {
      if (!g.mask(n, m)) continue;
      // Counter-based QPSK: two bits per occupied cell, keyed by (seed, cell).
      const uint64_t h = splitmix64(seed ^ splitmix64(static_cast<uint64_t>(m) * 1024 + n));
      const double phase = kPi / 4.0 + (h & 3) * kPi / 2.0;
      g.payload(n, m) = std::polar(1.0, phase);
    }
  }
  return g;
}

/// One SSB transmit beam: sector center and angular cell extents. Edge flags
/// mark cells on the sweep boundary, whose sector opens outward (targets
/// beyond the swept region are only ever illuminated by the boundary beams).
struct SsbBeam {
  double azimuth_rad = 0.0;
  double elevation_rad = 0.0;
  double az_width_rad = 0.0;
  double el_width_rad = 0.0;
  bool az_edge_low = false;
  bool az_edge_high = false;
  bool el_edge_low = false;
  bool el_edge_high = false;
};

/// Ordered SS-burst sweep covering the configured region, azimuth index fastest.
struct SweepPlan {
  std::vector<SsbBeam> beams;
  double burst_period_s = 20e-3;
  int n_az = 0;
  int n_el = 0;

  double az_min_rad = 0.0, az_max_rad = 0.0, el_min_rad = 0.0, el_max_rad = 0.0;

  /// Index of the beam whose cell contains (az, el); clamps to the nearest cell.
  int covering_beam(double az_rad, double el_rad) const {
    auto cell = [](double x, double lo, double hi, int n) {
      const int i = static_cast<int>(std::floor((x - lo) / (hi - lo) * n));
      return std::min(std::max(i, 0), n - 1);
    };
    const int a = cell(az_rad, az_min_rad, az_max_rad, n_az);
    const int e = cell(el_rad, el_min_rad, el_max_rad, n_el);
    return e * n_az + a;
  }
};

inline SweepPlan build_sweep_plan(double az_min_rad, double az_max_rad, double el_min_rad,
                                  double el_max_rad, int n_az, int n_el,
                                  double burst_period_s) {
  if (n_az < 1 || n_el < 1) throw std::invalid_argument("build_sweep_plan: grid shape must be >= 1");
  if (n_az * n_el > 64)
    throw std::invalid_argument("build_sweep_plan: beam count exceeds the 64-SSB burst budget");
  SweepPlan plan;
  plan.n_az = n_az;
  plan.n_el = n_el;
  plan.burst_period_s = burst_period_s;
  plan.az_min_rad = az_min_rad;
  plan.az_max_rad = az_max_rad;
  plan.el_min_rad = el_min_rad;
  plan.el_max_rad = el_max_rad;
  const double daz = (az_max_rad - az_min_rad) / n_az;
  const double del = (el_max_rad - el_min_rad) / n_el;
  plan.beams.reserve(static_cast<size_t>(n_az) * n_el);
  for (int e = 0; e < n_el; ++e) {
    for (int a = 0; a < n_az; ++a) {
      SsbBeam b;
      b.azimuth_rad = az_min_rad + (a + 0.5) * daz;
      b.elevation_rad = el_min_rad + (e + 0.5) * del;
      b.az_width_rad = daz;
      b.el_width_rad = del;
      b.az_edge_low = a == 0;
      b.az_edge_high = a == n_az - 1;
      b.el_edge_low = e == 0;
      b.el_edge_high = e == n_el - 1;
      plan.beams.push_back(b);
    }
  }
  return plan;
}

/// Uniform angle search grid.
struct AngleGrid {
  std::vector<double> az_rad;
  std::vector<double> el_rad;

  static AngleGrid uniform(double az_min, double az_max, double el_min, double el_max,
                           double step) {
    AngleGrid g;
    for (double a = az_min; a <= az_max + 1e-12; a += step) g.az_rad.push_back(a);
    for (double e = el_min; e <= el_max + 1e-12; e += step) g.el_rad.push_back(e);
    return g;
  }
  int n_points() const { return static_cast<int>(az_rad.size() * el_rad.size()); }
};

/// Element-domain steering vectors for every grid point, columns ordered
/// elevation-major (all azimuths of el[0], then el[1], ...).
inline CxMat steering_table(const UpaConfig& upa, const RadioConfig& radio,
                            const AngleGrid& grid) {
  CxMat a(upa.n_elements(), grid.n_points());
  int col = 0;
  for (double el : grid.el_rad)
    for (double az : grid.az_rad) a.col(col++) = steering_vector(upa, radio, el, az);
  return a;
}

/// Hybrid transmit beamformer for one SSB: constant-modulus analog matrix and
/// a digital combining vector with unit-norm product.
struct TxBeamformer {
  CxMat analog;   // N x N_rf, entries of modulus 1/sqrt(N)
  CxVec digital;  // N_rf

  CxVec combined() const { return analog * digital; }
};

// Widened sector beam: analog columns are steering vectors at n_rf_y x n_rf_z
// sub-directions uniformly tiling the beam's cell; uniform digital combining,
// normalized so the radiated vector has unit norm.
inline TxBeamformer ssb_tx_beamformer(const UpaConfig& upa, const RadioConfig& radio,
                                      const SsbBeam& beam) {
  const int n = upa.n_elements();
  const int n_rf = upa.n_rf();
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  TxBeamformer bf;
  bf.analog.resize(n, n_rf);
  int col = 0;
  for (int pe = 0; pe < upa.n_rf_z; ++pe) {
    const double el = beam.elevation_rad + beam.el_width_rad * ((pe + 0.5) / upa.n_rf_z - 0.5);
    for (int pa = 0; pa < upa.n_rf_y; ++pa) {
      const double az = beam.azimuth_rad + beam.az_width_rad * ((pa + 0.5) / upa.n_rf_y - 0.5);
      bf.analog.col(col++) = steering_vector(upa, radio, el, az) * inv_sqrt_n;
    }
  }
  bf.digital = CxVec::Constant(n_rf, cxd(1.0, 0.0));
  bf.digital /= (bf.analog * bf.digital).norm();
  return bf;
}

}  // namespace ssbsim

#endif  // SSBSIM_RADIO_HPP
