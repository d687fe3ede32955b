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

#include <catch2/catch_amalgamated.hpp>

#include "ssbsim/channel.hpp"

using namespace ssbsim;
using Catch::Approx;

namespace {

const RadioConfig kRadio;

UavTruth make_uav(double x, double y, double z, double vx, double vy, double vz,
                  double rcs = 1.0) {
  UavTruth u;
  u.position = Vec3(x, y, z);
  u.velocity = Vec3(vx, vy, vz);
  u.rcs = rcs;
  return u;
}

}  // namespace

TEST_CASE("truth_to_params on an axis-aligned target") {
  const auto p = truth_to_params(make_uav(100, 0, 0, 10, 0, 0), kRadio, 1);
  REQUIRE(p.range_m == Approx(100.0));
  REQUIRE(p.radial_velocity_mps == Approx(10.0));
  REQUIRE(p.elevation_rad == Approx(0.0).margin(1e-15));
  REQUIRE(p.azimuth_rad == Approx(0.0).margin(1e-15));
  REQUIRE(p.delay_s == Approx(200.0 / kRadio.c0));
  REQUIRE(p.doppler_hz == Approx(20.0 * kRadio.fc_hz / kRadio.c0));
}

TEST_CASE("truth_to_params rejects degenerate geometries") {
  REQUIRE_THROWS_AS(truth_to_params(make_uav(0, 0, 0, 0, 0, 0), kRadio, 1), std::domain_error);
  // Directly overhead: elevation hits the pi/2 boundary.
  REQUIRE_THROWS_AS(truth_to_params(make_uav(0, 0, 50, 0, 0, 0), kRadio, 1), std::domain_error);
}

TEST_CASE("radar-equation amplitude matches an independent hand computation") {
  const auto p = truth_to_params(make_uav(100, 0, 0, 0, 0, 0), kRadio, 7);
  const double c = 299792458.0;
  const double expected =
      std::sqrt(c * c * 1.0 /
                (std::pow(4.0 * kPi, 3) * std::pow(100.0, 4) * std::pow(28e9, 2)));
  REQUIRE(std::abs(p.gain) == Approx(expected).epsilon(1e-12));
}

namespace {

struct EchoSetup {
  UpaConfig upa = UpaConfig::make(8, 4, 4, 2, kRadio);
  SsbGrid grid = build_ssb_grid(11);
  CxVec w_tx;
  CxMat w_rx;

  EchoSetup() {
    SsbBeam beam;  // boresight
    w_tx = ssb_tx_beamformer(upa, kRadio, beam).combined();
    w_rx = CxMat::Zero(upa.n_elements(), 2);
    const CxVec a0 = steering_vector(upa, kRadio, 0.0, 0.0);
    const CxVec a1 = steering_vector(upa, kRadio, 0.0, deg2rad(20.0));
    w_rx.col(0) = a0 / a0.norm();
    w_rx.col(1) = (a1 - a0 * (a0.dot(a1) / a0.squaredNorm())).normalized();
  }
};

}  // namespace

TEST_CASE("echo of an empty scene with zero noise is identically zero") {
  EchoSetup s;
  const auto rx = sensing_echo({}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, 0.0, 3);
  for (const auto& chain : rx) REQUIRE(chain.norm() == 0.0);
}

TEST_CASE("noiseless echo phase slope across subcarriers equals -2 pi df tau") {
  EchoSetup s;
  const auto target = truth_to_params(make_uav(80, 0, 0, 0, 0, 0), kRadio, 5);
  CxMat w_rx = s.w_rx.leftCols(1);
  const auto rx = sensing_echo({target}, s.grid, s.upa, kRadio, s.w_tx, w_rx, 0.0, 3);
  // Symbol 1 is fully occupied; the per-subcarrier phase step is small, so the
  // slope follows from adjacent ratios without unwrapping.
  double slope = 0.0;
  int count = 0;
  for (int n = 1; n < s.grid.n_sc; ++n) {
    const cxd ratio = (rx[0](n, 1) / s.grid.payload(n, 1)) /
                      (rx[0](n - 1, 1) / s.grid.payload(n - 1, 1));
    slope += std::arg(ratio);
    ++count;
  }
  slope /= count;
  REQUIRE(slope == Approx(-2.0 * kPi * kRadio.delta_f_hz * target.delay_s).epsilon(1e-9));
}

TEST_CASE("noise-only echo has the configured per-cell variance") {
  EchoSetup s;
  const double noise_power = 2.5e-3;
  double acc = 0.0;
  long cells = 0;
  for (uint64_t seed = 0; seed < 60; ++seed) {
    const auto rx = sensing_echo({}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, noise_power, seed);
    for (const auto& chain : rx) {
      acc += chain.squaredNorm();
      cells += chain.size();
    }
  }
  REQUIRE(cells >= 100000);
  REQUIRE(acc / cells == Approx(noise_power).epsilon(0.05));
}

TEST_CASE("echo is linear in the target set") {
  EchoSetup s;
  const auto t1 = truth_to_params(make_uav(60, 20, 10, 5, 0, 0), kRadio, 21);
  const auto t2 = truth_to_params(make_uav(90, -15, 8, -3, 4, 0), kRadio, 22);
  const auto both = sensing_echo({t1, t2}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, 0.0, 1);
  const auto only1 = sensing_echo({t1}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, 0.0, 1);
  const auto only2 = sensing_echo({t2}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, 0.0, 1);
  for (size_t p = 0; p < both.size(); ++p) {
    const double rel = (both[p] - only1[p] - only2[p]).norm() / both[p].norm();
    REQUIRE(rel < 1e-10);
  }
}

TEST_CASE("negating radial velocity conjugates the symbol-axis progression") {
  EchoSetup s;
  SensingTargetParams fwd;
  fwd.gain = cxd(3e-7, 1e-7);
  fwd.range_m = 70.0;
  fwd.delay_s = 2.0 * 70.0 / kRadio.c0;
  fwd.doppler_hz = 2.0 * 15.0 * kRadio.fc_hz / kRadio.c0;
  fwd.elevation_rad = deg2rad(5.0);
  fwd.azimuth_rad = deg2rad(10.0);
  SensingTargetParams rev = fwd;
  rev.doppler_hz = -fwd.doppler_hz;
  const auto e_fwd = sensing_echo({fwd}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, 0.0, 1);
  const auto e_rev = sensing_echo({rev}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, 0.0, 1);
  const int n = 100;  // occupied in every symbol
  auto cfr = [&](const ChainStack& e, int m) { return e[0](n, m) / s.grid.payload(n, m); };
  for (int m = 1; m < s.grid.n_sym; ++m) {
    const cxd prog_fwd = cfr(e_fwd, m) / cfr(e_fwd, 0);
    const cxd prog_rev = cfr(e_rev, m) / cfr(e_rev, 0);
    REQUIRE(std::abs(prog_rev - std::conj(prog_fwd)) < 1e-9);
  }
}

TEST_CASE("doubling the RCS doubles the noiseless echo energy") {
  EchoSetup s;
  const auto t1 = truth_to_params(make_uav(60, 20, 10, 5, 0, 0, 1.0), kRadio, 9);
  const auto t2 = truth_to_params(make_uav(60, 20, 10, 5, 0, 0, 2.0), kRadio, 9);
  REQUIRE(std::norm(t2.gain) == Approx(2.0 * std::norm(t1.gain)).epsilon(1e-12));
  const auto e1 = sensing_echo({t1}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, 0.0, 1);
  const auto e2 = sensing_echo({t2}, s.grid, s.upa, kRadio, s.w_tx, s.w_rx, 0.0, 1);
  double en1 = 0.0, en2 = 0.0;
  for (size_t p = 0; p < e1.size(); ++p) {
    en1 += e1[p].squaredNorm();
    en2 += e2[p].squaredNorm();
  }
  REQUIRE(en2 == Approx(2.0 * en1).epsilon(1e-12));
}

TEST_CASE("single-user matched filter SINR is P ||h||^2 / sigma^2") {
  const UpaConfig upa = UpaConfig::make(8, 4, 4, 2, kRadio);
  const auto ch = make_comm_channel(upa, kRadio, 120.0, deg2rad(10.0), deg2rad(-30.0), 4);
  const double p = 0.25, noise = 1e-9;
  CxMat w(upa.n_elements(), 1);
  w.col(0) = std::sqrt(p) * ch.h / ch.h.norm();
  REQUIRE(comm_receive_sinr(ch, w, 0, noise) ==
          Approx(p * ch.h.squaredNorm() / noise).epsilon(1e-10));
}

TEST_CASE("beam orthogonal to the channel yields zero SINR") {
  const UpaConfig upa = UpaConfig::make(8, 4, 4, 2, kRadio);
  const auto ch = make_comm_channel(upa, kRadio, 120.0, 0.0, 0.0, 4);
  CxVec v = CxVec::Zero(upa.n_elements());
  v(0) = 1.0;
  CxVec w0 = v - ch.h * (ch.h.dot(v) / ch.h.squaredNorm());
  CxMat w(upa.n_elements(), 1);
  w.col(0) = w0.normalized();
  REQUIRE(comm_receive_sinr(ch, w, 0, 1e-9) < 1e-20);
}

TEST_CASE("two-user SINR matches an independently written evaluation") {
  const UpaConfig upa = UpaConfig::make(8, 4, 4, 2, kRadio);
  const auto ch = make_comm_channel(upa, kRadio, 90.0, deg2rad(12.0), deg2rad(40.0), 8);
  auto rng = make_rng(77, 3);
  std::normal_distribution<double> g;
  CxMat w(upa.n_elements(), 2);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < w.rows(); ++i) w(i, c) = cxd(g(rng), g(rng));
  const double noise = 3e-7;

  // Duplicate-implementation oracle: explicit sums, no Eigen reductions.
  for (int k = 0; k < 2; ++k) {
    cxd sig(0, 0), mui(0, 0);
    for (int i = 0; i < w.rows(); ++i) {
      sig += std::conj(ch.h(i)) * w(i, k);
      mui += std::conj(ch.h(i)) * w(i, 1 - k);
    }
    const double expected = std::norm(sig) / (std::norm(mui) + noise);
    REQUIRE(comm_receive_sinr(ch, w, k, noise) == Approx(expected).epsilon(1e-12));
  }
}
