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

#ifndef SSBSIM_SENSING_HPP
#define SSBSIM_SENSING_HPP

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "ssbsim/channel.hpp"
#include "ssbsim/common.hpp"
#include "ssbsim/radio.hpp"

namespace ssbsim {

/// DFT-codebook receive analog beamformer with orthonormal columns focused on
/// one SSB sector. Every entry has modulus 1/sqrt(N_RX).
struct RxSensingBeamformer {
  CxMat matrix;             // N_RX x N_RX_RF
  std::vector<int> cols_z;  // selected vertical DFT column indices
  std::vector<int> cols_y;  // selected horizontal DFT column indices
};

namespace detail {

// Axis DFT column k over n elements: d_k[q] = exp(+j 2 pi q k / n).
inline CxVec dft_column(int n, int k) {
  CxVec d(n);
  for (int q = 0; q < n; ++q) d(q) = std::polar(1.0, 2.0 * kPi * q * k / n);
  return d;
}

// Top n_sel DFT columns ranked by |d_k^H a|. Ties break toward the column
// whose wrapped bin index is closest to the steering vector's fractional bin.
inline std::vector<int> select_axis_columns(const CxVec& a_axis, int n_sel, double frac_bin) {
  const int n = static_cast<int>(a_axis.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> score(n), dist(n);
  for (int k = 0; k < n; ++k) {
    score[k] = std::abs(dft_column(n, k).dot(a_axis));
    double d = std::fmod(std::abs(k - frac_bin), static_cast<double>(n));
    dist[k] = std::min(d, n - d);
  }
  std::sort(idx.begin(), idx.end(), [&](int l, int r) {
    if (score[l] != score[r]) return score[l] > score[r];
    if (dist[l] != dist[r]) return dist[l] < dist[r];
    return l < r;
  });
  idx.resize(n_sel);
  return idx;
}

}  // namespace detail

// Locally-focused selection: per axis, score every DFT column against the
// sector center's steering factor and keep the top n_rf_z / n_rf_y columns;
// the beamformer is all Kronecker pairs scaled by 1/sqrt(N_RX).
inline RxSensingBeamformer design_rx_beamformer(const UpaConfig& upa, const RadioConfig& radio,
                                                const SsbBeam& beam) {
  const double lambda = radio.wavelength();
  const CxVec az_factor = steering_y(upa, radio, beam.elevation_rad, beam.azimuth_rad);
  const CxVec el_factor = steering_z(upa, radio, beam.elevation_rad);
  const double frac_y =
      upa.n_y * upa.d_y * std::sin(beam.azimuth_rad) * std::cos(beam.elevation_rad) / lambda;
  const double frac_z = upa.n_z * upa.d_z * std::sin(beam.elevation_rad) / lambda;

  RxSensingBeamformer w;
  w.cols_y = detail::select_axis_columns(az_factor, upa.n_rf_y, frac_y);
  w.cols_z = detail::select_axis_columns(el_factor, upa.n_rf_z, frac_z);

  const int n = upa.n_elements();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  w.matrix.resize(n, upa.n_rf());
  int col = 0;
  for (int p : w.cols_z) {
    const CxVec dz = detail::dft_column(upa.n_z, p);
    for (int q : w.cols_y) {
      const CxVec dy = detail::dft_column(upa.n_y, q);
      for (int pz = 0; pz < upa.n_z; ++pz)
        for (int qy = 0; qy < upa.n_y; ++qy)
          w.matrix(pz * upa.n_y + qy, col) = scale * dz(pz) * dy(qy);
      ++col;
    }
  }
  return w;
}

/// LS channel frequency response: rx / payload on occupied cells, exact zeros
/// elsewhere.
inline ChainStack ls_cfr(const ChainStack& rx, const SsbGrid& grid) {
  ChainStack cfr(rx.size());
  for (size_t p = 0; p < rx.size(); ++p) {
    if (rx[p].rows() != grid.n_sc || rx[p].cols() != grid.n_sym)
      throw std::invalid_argument("ls_cfr: grid shape mismatch");
    cfr[p] = CxMat::Zero(grid.n_sc, grid.n_sym);
    for (int m = 0; m < grid.n_sym; ++m)
      for (int n = 0; n < grid.n_sc; ++n)
        if (grid.mask(n, m)) cfr[p](n, m) = rx[p](n, m) / grid.payload(n, m);
  }
  return cfr;
}

namespace detail {

// Kernel caches keyed by (rows, cols); one instance per thread.
inline const CxMat& idft_kernel(int n_idft, int n_sc) {
  thread_local std::map<std::pair<int, int>, CxMat> cache;
  auto it = cache.find({n_idft, n_sc});
  if (it == cache.end()) {
    CxMat q(n_idft, n_sc);
    for (int i = 0; i < n_idft; ++i)
      for (int n = 0; n < n_sc; ++n)
        q(i, n) = std::polar(1.0, 2.0 * kPi * static_cast<double>(n) * i / n_idft);
    it = cache.emplace(std::make_pair(n_idft, n_sc), std::move(q)).first;
  }
  return it->second;
}

inline const CxMat& dft_kernel(int n_sym, int m_dft) {
  thread_local std::map<std::pair<int, int>, CxMat> cache;
  auto it = cache.find({n_sym, m_dft});
  if (it == cache.end()) {
    CxMat s(n_sym, m_dft);
    for (int m = 0; m < n_sym; ++m)
      for (int j = 0; j < m_dft; ++j)
        s(m, j) = std::polar(1.0, -2.0 * kPi * static_cast<double>(m) * j / m_dft);
    it = cache.emplace(std::make_pair(n_sym, m_dft), std::move(s)).first;
  }
  return it->second;
}

}  // namespace detail

/// Per-chain delay profiles d(i, m): zero-padded IDFT along the subcarrier
/// axis with kernel exp(+j 2 pi n i / N_IDFT). Output is n_idft x n_sym.
inline ChainStack delay_profiles(const ChainStack& cfr, int n_idft) {
  if (cfr.empty()) throw std::invalid_argument("delay_profiles: empty input");
  const int n_sc = static_cast<int>(cfr[0].rows());
  if (n_idft < n_sc)
    throw std::invalid_argument("delay_profiles: n_idft must be >= subcarrier count");
  const CxMat& q = detail::idft_kernel(n_idft, n_sc);
  ChainStack out(cfr.size());
  for (size_t p = 0; p < cfr.size(); ++p) out[p] = q * cfr[p];
  return out;
}

// Rows of the delay profile restricted to selected delay bins; identical
// values to the corresponding rows of delay_profiles().
inline ChainStack delay_profile_rows(const ChainStack& cfr, int n_idft,
                                     const std::vector<int>& rows) {
  const int n_sc = static_cast<int>(cfr[0].rows());
  const CxMat& q = detail::idft_kernel(n_idft, n_sc);
  CxMat qr(rows.size(), n_sc);
  for (size_t r = 0; r < rows.size(); ++r) qr.row(r) = q.row(rows[r]);
  ChainStack out(cfr.size());
  for (size_t p = 0; p < cfr.size(); ++p) out[p] = qr * cfr[p];
  return out;
}

/// Bin metadata of a delay-Doppler transform.
struct DdAxes {
  int n_idft = 256;
  int m_dft = 256;
  double delta_f_hz = 120e3;
  double symbol_s = 8.9e-6;
  double fc_hz = 28e9;
  double c0 = kSpeedOfLight;

  double delay_bin_s() const { return 1.0 / (n_idft * delta_f_hz); }
  double doppler_bin_hz() const { return 1.0 / (m_dft * symbol_s); }
  double range_of_bin(int i) const { return c0 * i / (2.0 * n_idft * delta_f_hz); }
  // Two-sided interpretation: j past m_dft/2 wraps to negative Doppler.
  int signed_doppler_bin(int j) const { return j <= m_dft / 2 ? j : j - m_dft; }
  double velocity_of_bin(int j) const {
    return c0 * signed_doppler_bin(j) / (2.0 * fc_hz * m_dft * symbol_s);
  }
};

/// Per-chain delay-Doppler profiles v(i, j).
struct DelayDopplerCube {
  ChainStack chains;  // each n_idft x m_dft
  DdAxes axes;
};

/// Zero-padded IDFT along subcarriers (kernel +) followed by a zero-padded DFT
/// along symbols (kernel -), per RF chain.
inline DelayDopplerCube delay_doppler(const ChainStack& cfr, int n_idft, int m_dft,
                                      const RadioConfig& radio) {
  if (cfr.empty()) throw std::invalid_argument("delay_doppler: empty input");
  const int n_sym = static_cast<int>(cfr[0].cols());
  if (m_dft < n_sym) throw std::invalid_argument("delay_doppler: m_dft must be >= symbol count");
  DelayDopplerCube cube;
  cube.axes.n_idft = n_idft;
  cube.axes.m_dft = m_dft;
  cube.axes.delta_f_hz = radio.delta_f_hz;
  cube.axes.symbol_s = radio.symbol_s;
  cube.axes.fc_hz = radio.fc_hz;
  cube.axes.c0 = radio.c0;
  const ChainStack profiles = delay_profiles(cfr, n_idft);
  const CxMat& s = detail::dft_kernel(n_sym, m_dft);
  cube.chains.resize(profiles.size());
  for (size_t p = 0; p < profiles.size(); ++p) cube.chains[p] = profiles[p] * s;
  return cube;
}

/// Coherent combination: DD(i, j) = |sum_p v_p(i, j)|^2.
inline Mat dd_map(const DelayDopplerCube& cube) {
  CxMat acc = cube.chains[0];
  for (size_t p = 1; p < cube.chains.size(); ++p) acc += cube.chains[p];
  return acc.cwiseAbs2();
}

/// One delay-Doppler peak with its physical interpretation.
struct Detection {
  int delay_bin = 0;
  int doppler_bin = 0;  // raw bin in [0, m_dft)
  double range_m = 0.0;
  double velocity_mps = 0.0;
  double power = 0.0;
};

struct PeakDetectorConfig {
  int max_targets = 8;
  double threshold_over_median_db = 13.0;
  int delay_guard = 1;
  // Suppression radius along Doppler; < 0 collapses each delay neighborhood
  // to its strongest peak. A 4-symbol burst has -11 dB Doppler sidelobes
  // spanning the whole axis, so same-range candidates are sidelobes of the
  // strongest one, not resolvable targets.
  int doppler_guard = -1;
  // Candidates this close in delay to a much stronger accepted peak are its
  // delay sidelobes (the 240-subcarrier band's first sidelobe sits ~1.3 bins
  // out at -13 dB); comparable-power neighbors survive as real targets.
  int sidelobe_guard_bins = 3;
  double sidelobe_rel_power = 0.25;
};

// Local maxima over a 3x3 neighborhood, strictly above kappa * median, with
// guarded non-maximum suppression. The Doppler axis is treated circularly.
inline std::vector<Detection> detect_peaks(const Mat& dd, const DdAxes& axes,
                                           const PeakDetectorConfig& cfg) {
  const int ni = static_cast<int>(dd.rows());
  const int nj = static_cast<int>(dd.cols());
  std::vector<double> vals(dd.data(), dd.data() + dd.size());
  std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
  const double median = vals[vals.size() / 2];
  const double threshold = db2lin(cfg.threshold_over_median_db) * median;

  std::vector<std::pair<double, std::pair<int, int>>> candidates;
  for (int i = 0; i < ni; ++i) {
    for (int j = 0; j < nj; ++j) {
      const double v = dd(i, j);
      if (!(v > threshold)) continue;
      bool is_max = true;
      for (int di = -1; di <= 1 && is_max; ++di) {
        const int ii = i + di;
        if (ii < 0 || ii >= ni) continue;
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int jj = (j + dj + nj) % nj;
          if (dd(ii, jj) > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({v, {i, j}});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  std::vector<Detection> out;
  for (const auto& [v, ij] : candidates) {
    if (static_cast<int>(out.size()) >= cfg.max_targets) break;
    bool suppressed = false;
    for (const auto& d : out) {
      const int ddist = std::abs(d.delay_bin - ij.first);
      int jdist = std::abs(d.doppler_bin - ij.second);
      jdist = std::min(jdist, nj - jdist);
      if (ddist <= cfg.delay_guard && (cfg.doppler_guard < 0 || jdist <= cfg.doppler_guard)) {
        suppressed = true;
        break;
      }
      if (ddist <= cfg.sidelobe_guard_bins && v < cfg.sidelobe_rel_power * d.power) {
        suppressed = true;
        break;
      }
    }
    if (suppressed) continue;
    Detection det;
    det.delay_bin = ij.first;
    det.doppler_bin = ij.second;
    det.power = v;
    det.range_m = axes.range_of_bin(det.delay_bin);
    det.velocity_mps = axes.velocity_of_bin(det.doppler_bin);
    out.push_back(det);
  }
  return out;
}

// Window of delay bins around a detection, reflected inward at the edges so
// the snapshot count stays fixed.
inline std::vector<int> snapshot_window(int delay_bin, int w_r, int n_idft) {
  int lo = delay_bin - w_r;
  if (lo < 0) lo = 0;
  if (lo + 2 * w_r > n_idft - 1) lo = n_idft - 1 - 2 * w_r;
  if (lo < 0) throw std::invalid_argument("snapshot_window: window wider than the delay axis");
  std::vector<int> rows(2 * w_r + 1);
  std::iota(rows.begin(), rows.end(), lo);
  return rows;
}

/// Snapshot matrix Y (N_RX_RF x N_ss), N_ss = (2 w_r + 1) M: pre-combination
/// per-chain delay-profile samples around the detected bin, stacked across
/// all M symbols.
inline CxMat gather_snapshots(const ChainStack& profiles, int delay_bin, int w_r) {
  const int n_rf = static_cast<int>(profiles.size());
  const int n_idft = static_cast<int>(profiles[0].rows());
  const int n_sym = static_cast<int>(profiles[0].cols());
  const auto rows = snapshot_window(delay_bin, w_r, n_idft);
  const int width = static_cast<int>(rows.size());
  CxMat y(n_rf, width * n_sym);
  for (int m = 0; m < n_sym; ++m)
    for (int r = 0; r < width; ++r)
      for (int p = 0; p < n_rf; ++p) y(p, m * width + r) = profiles[p](rows[r], m);
  return y;
}

/// Beamspace steering table: W^H applied to every grid steering vector.
inline CxMat beamspace_table(const RxSensingBeamformer& w, const CxMat& steering) {
  return w.matrix.adjoint() * steering;
}

struct MusicPeak {
  int az_idx = 0;
  int el_idx = 0;
  double azimuth_rad = 0.0;
  double elevation_rad = 0.0;
  double value = 0.0;
};

struct MusicResult {
  Mat spectrum;  // n_el x n_az
  std::vector<MusicPeak> peaks;
  int n_sources = 0;
  Vec eigenvalues;  // descending
};

namespace detail {

// 2D local maxima, strongest first; falls back to the global maximum so a
// detection always yields at least one angle candidate.
inline std::vector<MusicPeak> spectrum_peaks(const Mat& spectrum, const AngleGrid& grid,
                                             int n_peaks) {
  const int ne = static_cast<int>(spectrum.rows());
  const int na = static_cast<int>(spectrum.cols());
  std::vector<MusicPeak> found;
  for (int e = 0; e < ne; ++e) {
    for (int a = 0; a < na; ++a) {
      const double v = spectrum(e, a);
      bool is_max = true;
      for (int de = -1; de <= 1 && is_max; ++de) {
        for (int da = -1; da <= 1; ++da) {
          if (de == 0 && da == 0) continue;
          const int ee = e + de, aa = a + da;
          if (ee < 0 || ee >= ne || aa < 0 || aa >= na) continue;
          if (spectrum(ee, aa) > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) found.push_back({a, e, grid.az_rad[a], grid.el_rad[e], v});
    }
  }
  std::sort(found.begin(), found.end(), [](const MusicPeak& l, const MusicPeak& r) {
    if (l.value != r.value) return l.value > r.value;
    return std::make_pair(l.el_idx, l.az_idx) < std::make_pair(r.el_idx, r.az_idx);
  });
  // De-duplicate plateau neighbours.
  std::vector<MusicPeak> out;
  for (const auto& p : found) {
    bool near = false;
    for (const auto& q : out)
      if (std::abs(p.az_idx - q.az_idx) <= 1 && std::abs(p.el_idx - q.el_idx) <= 1) {
        near = true;
        break;
      }
    if (!near) out.push_back(p);
    if (static_cast<int>(out.size()) >= n_peaks) break;
  }
  if (out.empty()) {
    int e = 0, a = 0;
    spectrum.maxCoeff(&e, &a);
    out.push_back({a, e, grid.az_rad[a], grid.el_rad[e], spectrum(e, a)});
  }
  return out;
}

}  // namespace detail

/// Spectrum given an explicit noise-subspace basis:
///   P(phi, theta) = ||a~||^2 / (a~^H Gamma Gamma^H a~).
inline Mat music_spectrum_with_subspace(const CxMat& noise_subspace, const CxMat& bs_table,
                                        const AngleGrid& grid) {
  const int ne = static_cast<int>(grid.el_rad.size());
  const int na = static_cast<int>(grid.az_rad.size());
  Mat spectrum(ne, na);
  for (int e = 0; e < ne; ++e) {
    for (int a = 0; a < na; ++a) {
      const auto bs = bs_table.col(e * na + a);
      const double num = bs.squaredNorm();
      const double den = (noise_subspace.adjoint() * bs).squaredNorm();
      spectrum(e, a) = num / std::max(den, 1e-300);
    }
  }
  return spectrum;
}

/// 2D augmented beamspace MUSIC over the given grid. n_sources < 1 selects the
/// model order by the eigenvalue-gap rule (smallest k with
/// lambda_{k+1}/lambda_1 < gap, capped at N_RF - 1).
inline MusicResult music_spectrum(const CxMat& snapshots, const CxMat& bs_table,
                                  const AngleGrid& grid, int n_sources,
                                  double eigengap = 0.01) {
  const int n_rf = static_cast<int>(snapshots.rows());
  const int n_ss = static_cast<int>(snapshots.cols());
  if (n_sources >= n_rf)
    throw std::invalid_argument("music_spectrum: n_sources must be < RF chain count");
  const CxMat r = snapshots * snapshots.adjoint() / static_cast<double>(n_ss);
  Eigen::SelfAdjointEigenSolver<CxMat> es(r);

  MusicResult res;
  res.eigenvalues = es.eigenvalues().reverse();
  if (n_sources < 1) {
    const int cap = n_rf - 1;
    int k = cap;
    for (int c = 1; c <= cap; ++c) {
      if (res.eigenvalues(std::min(c, n_rf - 1)) / std::max(res.eigenvalues(0), 1e-300) <
          eigengap) {
        k = c;
        break;
      }
    }
    n_sources = k;
  }
  res.n_sources = n_sources;
  const CxMat noise_subspace = es.eigenvectors().leftCols(n_rf - n_sources);
  res.spectrum = music_spectrum_with_subspace(noise_subspace, bs_table, grid);
  res.peaks = detail::spectrum_peaks(res.spectrum, grid, n_sources);
  return res;
}

/// One sensed target candidate.
struct Measurement {
  double range_m = 0.0;
  double velocity_mps = 0.0;
  double elevation_rad = 0.0;
  double azimuth_rad = 0.0;
  double music_peak_value = 0.0;
  double dd_power = 0.0;

  Vec4 vector() const { return Vec4(range_m, velocity_mps, elevation_rad, azimuth_rad); }
};

struct SensingConfig {
  int n_idft = 256;
  int m_dft = 256;
  int window_radius = 2;  // w_r
  PeakDetectorConfig detector;
  double music_eigengap = 0.01;
  int n_sources_override = -1;  // <1: eigenvalue-gap rule
  // MUSIC peaks below this pseudospectrum value are artifacts: non-source
  // directions evaluate to ~1, in-sector targets to O(10^2), and sidelobe
  // echoes from neighboring sectors to single digits. A detection whose peaks
  // all fail the floor emits no measurement.
  double music_peak_min = 10.0;
  // Angle peaks outside the illuminating beam's cell, expanded by this many
  // cell widths per side, are sidelobe aliases: a target cannot produce a
  // legitimate angle estimate far outside the sector that illuminated it.
  // Disabled when the beam carries no cell extents.
  double sector_slack_cells = 0.5;
  double noise_power = 0.0;
};

/// Per-burst capture of intermediate products for CSV dumps and diagnostics.
struct BurstDebug {
  Mat dd;
  DdAxes axes;
  std::vector<Detection> detections;
  std::vector<MusicResult> music;
};

/// Optional reuse of the angle-search tables across bursts: `steering` is the
/// shared element-domain grid table; `bs_cache` is this beam's beamspace
/// table, filled lazily on the first burst that reaches MUSIC.
struct MusicContext {
  const CxMat* steering = nullptr;
  CxMat* bs_cache = nullptr;
};

/// Full single-SSB sensing chain: echo -> LS CFR -> delay-Doppler map -> peak
/// detection -> per-peak snapshots -> beamspace MUSIC. Each DD peak emits one
/// measurement per MUSIC angle peak, carrying the peak's range and velocity.
///
/// The coherent DD map is computed from the chain-summed CFR; by linearity of
/// the transforms this equals summing per-chain profiles, while per-chain
/// profiles are only materialized on the snapshot windows actually used.
inline std::vector<Measurement> sense_burst(const std::vector<UavTruth>& scene,
                                            const SsbBeam& beam, const UpaConfig& tx_upa,
                                            const UpaConfig& rx_upa, const RadioConfig& radio,
                                            const SsbGrid& grid, const AngleGrid& angle_grid,
                                            const SensingConfig& cfg, uint64_t seed,
                                            const MusicContext* music_ctx = nullptr,
                                            BurstDebug* debug = nullptr) {
  std::vector<SensingTargetParams> targets;
  targets.reserve(scene.size());
  for (size_t l = 0; l < scene.size(); ++l)
    targets.push_back(truth_to_params(scene[l], radio, derive_seed(seed, 0x7A, l)));

  const CxVec w_tx = ssb_tx_beamformer(tx_upa, radio, beam).combined();
  const RxSensingBeamformer w_rx = design_rx_beamformer(rx_upa, radio, beam);

  const ChainStack rx = sensing_echo(targets, grid, rx_upa, radio, w_tx, w_rx.matrix,
                                     cfg.noise_power, seed);
  const ChainStack cfr = ls_cfr(rx, grid);

  ChainStack combined(1, cfr[0]);
  for (size_t p = 1; p < cfr.size(); ++p) combined[0] += cfr[p];
  const DelayDopplerCube cube = delay_doppler(combined, cfg.n_idft, cfg.m_dft, radio);
  const Mat dd = dd_map(cube);
  const std::vector<Detection> detections = detect_peaks(dd, cube.axes, cfg.detector);

  if (debug) {
    debug->dd = dd;
    debug->axes = cube.axes;
    debug->detections = detections;
    debug->music.clear();
  }
  if (detections.empty()) return {};

  CxMat bs_local;
  const CxMat* bs = nullptr;
  if (music_ctx && music_ctx->bs_cache && music_ctx->bs_cache->size() > 0) {
    bs = music_ctx->bs_cache;
  } else {
    bs_local = (music_ctx && music_ctx->steering)
                   ? beamspace_table(w_rx, *music_ctx->steering)
                   : beamspace_table(w_rx, steering_table(rx_upa, radio, angle_grid));
    if (music_ctx && music_ctx->bs_cache) {
      *music_ctx->bs_cache = bs_local;
      bs = music_ctx->bs_cache;
    } else {
      bs = &bs_local;
    }
  }

  std::vector<Measurement> out;
  for (const auto& det : detections) {
    const auto rows = snapshot_window(det.delay_bin, cfg.window_radius, cfg.n_idft);
    const ChainStack window_profiles = delay_profile_rows(cfr, cfg.n_idft, rows);
    // Rows are already window-local; gather with the window centered.
    const CxMat snapshots = gather_snapshots(window_profiles, cfg.window_radius,
                                             cfg.window_radius);
    const MusicResult music = music_spectrum(snapshots, *bs, angle_grid,
                                             cfg.n_sources_override, cfg.music_eigengap);
    const bool gate_sector = beam.az_width_rad > 0.0 && beam.el_width_rad > 0.0;
    const double az_extent = beam.az_width_rad * (0.5 + cfg.sector_slack_cells);
    const double el_extent = beam.el_width_rad * (0.5 + cfg.sector_slack_cells);
    const double big = 2.0 * kPi;
    const double az_lo = beam.az_edge_low ? big : az_extent;
    const double az_hi = beam.az_edge_high ? big : az_extent;
    const double el_lo = beam.el_edge_low ? big : el_extent;
    const double el_hi = beam.el_edge_high ? big : el_extent;
    for (size_t pk = 0; pk < music.peaks.size(); ++pk) {
      const auto& peak = music.peaks[pk];
      if (peak.value < cfg.music_peak_min) continue;
      if (gate_sector) {
        const double daz = wrap_angle(peak.azimuth_rad - beam.azimuth_rad);
        const double del = peak.elevation_rad - beam.elevation_rad;
        if (daz < -az_lo || daz > az_hi || del < -el_lo || del > el_hi) continue;
      }
      Measurement m;
      m.range_m = det.range_m;
      m.velocity_mps = det.velocity_mps;
      m.elevation_rad = peak.elevation_rad;
      m.azimuth_rad = peak.azimuth_rad;
      m.music_peak_value = peak.value;
      m.dd_power = det.power;
      out.push_back(m);
    }
    if (debug) debug->music.push_back(music);
  }
  return out;
}

}  // namespace ssbsim

#endif  // SSBSIM_SENSING_HPP
