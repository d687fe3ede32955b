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

#ifndef SSBSIM_SIM_HPP
#define SSBSIM_SIM_HPP

#include <functional>
#include <numeric>
#include <string>

#include "ssbsim/beamforming.hpp"
#include "ssbsim/channel.hpp"
#include "ssbsim/scenario.hpp"
#include "ssbsim/sensing.hpp"
#include "ssbsim/tracker.hpp"

namespace ssbsim {

/// Ground truth of all UAVs at time t: closed-form piecewise
/// constant-acceleration kinematics. The velocity factor scales both the
/// initial velocity and every maneuver acceleration.
inline std::vector<UavTruth> propagate_truth(const std::vector<UavScenario>& uavs, double t,
                                             double velocity_factor = 1.0) {
  std::vector<UavTruth> out;
  out.reserve(uavs.size());
  for (const auto& u : uavs) {
    Vec3 pos = u.position0;
    Vec3 vel = velocity_factor * u.velocity0;
    // Breakpoints where the acceleration changes.
    std::vector<double> cuts = {0.0, t};
    for (const auto& m : u.maneuvers) {
      if (m.t_start < t) cuts.push_back(m.t_start);
      if (m.t_end < t) cuts.push_back(m.t_end);
    }
    std::sort(cuts.begin(), cuts.end());
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double t0 = cuts[i], t1 = cuts[i + 1];
      if (t1 <= t0) continue;
      Vec3 accel = Vec3::Zero();
      const double mid = (t0 + t1) / 2.0;
      for (const auto& m : u.maneuvers)
        if (mid >= m.t_start && mid < m.t_end) accel += velocity_factor * m.accel;
      const double dt = t1 - t0;
      pos += vel * dt + 0.5 * accel * dt * dt;
      vel += accel * dt;
    }
    UavTruth truth;
    truth.position = pos;
    truth.velocity = vel;
    truth.rcs = u.rcs;
    out.push_back(truth);
  }
  return out;
}

/// One rate-log row per user per KF slot.
struct RateRow {
  double time = 0.0;
  int user = 0;
  double rate = 0.0;  // bit/s/Hz after the overhead deduction
  std::string scheme;
  double overhead_fraction = 0.0;
};

struct TrackRow {
  double time = 0.0;
  int track_id = 0;
  Vec6 state = Vec6::Zero();
  double range = 0.0, elevation_rad = 0.0, azimuth_rad = 0.0;
  double sigma_r = 0.0, sigma_el = 0.0, sigma_az = 0.0;
  double trace_p = 0.0, trace_p_corrected = 0.0;
};

struct RunResult {
  std::vector<RateRow> rate_log;
  std::vector<TrackRow> track_log;
  double mean_rate = 0.0;       // time average of the per-slot user-mean rate
  double overhead_time = 0.0;   // seconds of zero-rate signalling
  double data_time = 0.0;       // horizon - overhead_time, exactly
  int beamformer_failures = 0;  // slots that fell back to the previous beams
  // Per-slot optimizer metrics for the digital-vs-hybrid invariant.
  std::vector<double> digital_metric;
  std::vector<double> hybrid_metric;
};

namespace detail {

// Greedy truth-to-track assignment by position distance, for rate scoring.
inline std::vector<int> assign_tracks_to_users(const std::vector<UavTruth>& truth,
                                               const std::vector<TrackState>& tracks) {
  std::vector<int> user_track(truth.size(), -1);
  std::vector<bool> used(tracks.size(), false);
  for (size_t pick = 0; pick < std::min(truth.size(), tracks.size()); ++pick) {
    double best = std::numeric_limits<double>::infinity();
    int bu = -1, bt = -1;
    for (size_t u = 0; u < truth.size(); ++u) {
      if (user_track[u] >= 0) continue;
      for (size_t t = 0; t < tracks.size(); ++t) {
        if (used[t]) continue;
        const double d = (truth[u].position - tracks[t].s.head<3>()).norm();
        if (d < best) {
          best = d;
          bu = static_cast<int>(u);
          bt = static_cast<int>(t);
        }
      }
    }
    if (bu < 0) break;
    user_track[bu] = bt;
    used[bt] = true;
  }
  return user_track;
}

// Merges duplicate detections of one target seen from adjacent beams in the
// same burst; keeps the strongest representative of each cluster. The
// per-axis angle tolerance absorbs the bias of out-of-focus sidelobe looks
// while staying below the separation of MUSIC-resolvable targets.
inline std::vector<Measurement> merge_burst_measurements(std::vector<Measurement> ms,
                                                         double range_tol,
                                                         double angle_tol_rad) {
  std::sort(ms.begin(), ms.end(), [](const Measurement& a, const Measurement& b) {
    if (a.dd_power != b.dd_power) return a.dd_power > b.dd_power;
    return a.music_peak_value > b.music_peak_value;
  });
  std::vector<Measurement> merged;
  const double tol = angle_tol_rad + 1e-9;
  for (const auto& m : ms) {
    bool duplicate = false;
    for (const auto& kept : merged) {
      if (std::abs(m.range_m - kept.range_m) <= range_tol &&
          std::abs(wrap_angle(m.azimuth_rad - kept.azimuth_rad)) <= tol &&
          std::abs(m.elevation_rad - kept.elevation_rad) <= tol) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) merged.push_back(m);
  }
  return merged;
}

inline UserPrior prior_from_track(const TrackState& track, const ScenarioConfig& sc,
                                  bool robust) {
  const PredictedParams p = predicted_params(track);
  UserPrior prior;
  prior.range_m = p.range_m;
  prior.elevation_rad = p.elevation_rad;
  prior.azimuth_rad = p.azimuth_rad;
  if (robust) {
    prior.sigma_r = std::min(p.sigma_r, p.range_m / 4.01);  // keep r > 4 sigma_r
    // Keep the elevation prior inside the field of view.
    const double el_room = (kPi / 2.0 - std::abs(p.elevation_rad)) / 3.01;
    prior.sigma_el = std::min(p.sigma_el, std::max(el_room, 0.0));
    prior.sigma_az = p.sigma_az;
  }
  prior.noise_var = sc.comm_noise_var;
  prior.sinr_threshold_linear = sc.gamma_linear();
  return prior;
}

// Spreads a signalling interval [start, start+duration) over the KF slots.
inline void charge_overhead(std::vector<double>& overhead, double slot_s, double start,
                            double duration) {
  int slot = static_cast<int>(start / slot_s + 1e-9);
  double remaining = duration;
  double cursor = start;
  while (remaining > 0.0 && slot < static_cast<int>(overhead.size())) {
    const double slot_end = (slot + 1) * slot_s;
    const double used = std::min(remaining, slot_end - cursor);
    overhead[slot] = std::min(1.0, overhead[slot] + used / slot_s);
    remaining -= used;
    cursor += used;
    ++slot;
  }
}

}  // namespace detail

struct RunOptions {
  double velocity_factor = 1.0;
  bool robust = true;          // false: point-estimate (non-robust) priors
  std::string scheme_tag = "proposed";
};

/// Two-phase proposed scheme: SSB sensing bursts at period T feed the EKF;
/// every KF period the predicted priors drive the robust beamformer, and the
/// instantaneous rate is scored against the true channels. Failures of any
/// optimization step keep the previous beamformer.
inline RunResult run_proposed(const ScenarioConfig& sc, const RunOptions& opts = {}) {
  const SweepPlan plan = sc.sweep_plan();
  const AngleGrid grid = sc.music_grid();
  const SsbGrid ssb = build_ssb_grid(sc.seed);
  const int n_slots = static_cast<int>(std::round(sc.horizon_s / sc.kf_period_s));
  const int burst_every = static_cast<int>(std::round(sc.burst_period_s / sc.kf_period_s));
  const int n_users = static_cast<int>(sc.uavs.size());
  const double burst_duration = plan.beams.size() * ssb.n_sym * sc.radio.symbol_s;

  // Shared angle tables, filled lazily per beam on first use.
  const CxMat steering = steering_table(sc.rx_upa, sc.radio, grid);
  std::vector<CxMat> bs_cache(plan.beams.size());

  Tracker tracker(sc.tracker);
  ScaWorkspace sca_ws;
  CxMat current_w = CxMat::Zero(sc.tx_upa.n_elements(), n_users);
  std::vector<int> current_track_ids;          // beam column -> track id
  std::vector<int> last_col_for_user(n_users, -1);

  RunResult result;
  std::vector<double> overhead(n_slots, 0.0);
  for (int slot = 0; slot < n_slots; ++slot) {
    const double t = slot * sc.kf_period_s;
    if (slot > 0) tracker.predict_all(sc.kf_period_s);

    if (slot % burst_every == 0) {
      const int burst_idx = slot / burst_every;
      const auto truth = propagate_truth(sc.uavs, t, opts.velocity_factor);
      std::vector<Measurement> all;
      for (size_t b = 0; b < plan.beams.size(); ++b) {
        MusicContext ctx{&steering, &bs_cache[b]};
        const auto ms = sense_burst(truth, plan.beams[b], sc.tx_upa, sc.rx_upa, sc.radio, ssb,
                                    grid, sc.sensing, derive_seed(sc.seed, burst_idx, b), &ctx);
        all.insert(all.end(), ms.begin(), ms.end());
      }
      const double range_bin = sc.radio.c0 / (2.0 * sc.sensing.n_idft * sc.radio.delta_f_hz);
      auto merged = detail::merge_burst_measurements(all, 1.5 * range_bin, sc.merge_angle_rad);
      // A monostatic radar cannot report targets inside its first range bin.
      std::erase_if(merged,
                    [&](const Measurement& m) { return m.range_m < 0.5 * range_bin; });
      // Tracks predicted outside the swept sector coast instead of dying.
      const auto in_coverage = [&](const TrackState& tr) {
        try {
          const Vec4 g = measure_fn(tr.s);
          const double margin_az = 0.5 * (sc.sweep_az_max - sc.sweep_az_min) / sc.sweep_n_az;
          const double margin_el = 0.5 * (sc.sweep_el_max - sc.sweep_el_min) / sc.sweep_n_el;
          return g(3) >= sc.sweep_az_min - margin_az && g(3) <= sc.sweep_az_max + margin_az &&
                 g(2) >= sc.sweep_el_min - margin_el && g(2) <= sc.sweep_el_max + margin_el;
        } catch (const std::domain_error&) {
          return false;
        }
      };
      tracker.measurement_burst(merged, t, in_coverage);
      detail::charge_overhead(overhead, sc.kf_period_s, t, burst_duration);
    }

    // Serve up to K tracks, best-confirmed first, so one-burst ghosts never
    // displace an established user track.
    std::vector<const TrackState*> served;
    for (const auto& tr : tracker.tracks()) served.push_back(&tr);
    std::sort(served.begin(), served.end(), [](const TrackState* a, const TrackState* b) {
      if (a->updates != b->updates) return a->updates > b->updates;
      return a->id < b->id;
    });
    if (static_cast<int>(served.size()) > n_users) served.resize(n_users);

    bool refreshed = false;
    if (!served.empty()) {
      std::vector<CorrelationModel> models;
      Vec gammas(served.size());
      bool priors_ok = true;
      for (size_t i = 0; i < served.size(); ++i) {
        try {
          const UserPrior prior = detail::prior_from_track(*served[i], sc, opts.robust);
          models.push_back(build_correlation_model(prior, sc.tx_upa, sc.radio));
          gammas(i) = prior.sinr_threshold_linear;
        } catch (const std::exception&) {
          priors_ok = false;
          break;
        }
      }
      if (priors_ok) {
        const auto sol = solve_sca(models, sc.p_max_w, gammas, sc.sca, &sca_ws);
        if (sol.status != sdp::SolveStatus::kInfeasible) {
          const auto rand = randomize_rank1(sol, models, sc.p_max_w, gammas,
                                            sc.randomization_draws,
                                            derive_seed(sc.seed, 0xD1, slot));
          if (rand.status == RandomizeStatus::kOk) {
            const auto hybrid =
                hybrid_factorize(rand.w_columns, sc.tx_upa, sc.p_max_w, sc.hybrid);
            CxMat w = CxMat::Zero(sc.tx_upa.n_elements(), n_users);
            const CxMat combined = hybrid.set.combined();
            for (size_t i = 0; i < served.size(); ++i) w.col(i) = combined.col(i);
            current_w = w;
            current_track_ids.clear();
            for (const auto* tr : served) current_track_ids.push_back(tr->id);
            result.digital_metric.push_back(average_sum_rate(rand.w_columns, models));
            CxMat hybrid_cols = combined.leftCols(served.size());
            result.hybrid_metric.push_back(average_sum_rate(hybrid_cols, models));
            refreshed = true;
          }
        }
      }
    }
    if (!served.empty() && !refreshed) ++result.beamformer_failures;

    // Score against the true channels.
    const auto truth = propagate_truth(sc.uavs, t, opts.velocity_factor);
    const auto user_track = detail::assign_tracks_to_users(truth, tracker.tracks());
    double slot_sum = 0.0;
    for (int u = 0; u < n_users; ++u) {
      double rate = 0.0;
      // Column of this user's assigned track; the transmitter keeps the last
      // known column while the track coasts unserved.
      int col = -1;
      if (user_track[u] >= 0) {
        const int tid = tracker.tracks()[user_track[u]].id;
        for (size_t c = 0; c < current_track_ids.size(); ++c)
          if (current_track_ids[c] == tid) col = static_cast<int>(c);
      }
      if (col >= 0) {
        last_col_for_user[u] = col;
      } else {
        col = last_col_for_user[u];
      }
      if (col >= 0 && current_w.norm() > 0.0) {
        const auto& pos = truth[u].position;
        const double r = pos.norm();
        const double el = std::asin(pos.z() / r);
        const double az = std::atan2(pos.y(), pos.x());
        const auto ch = make_comm_channel(sc.tx_upa, sc.radio, r, el, az,
                                          derive_seed(sc.seed, 0xCC, slot * 64 + u));
        const double sinr = comm_receive_sinr(ch, current_w, col, sc.comm_noise_var);
        rate = std::log2(1.0 + sinr);
      }
      const double effective = rate * (1.0 - overhead[slot]);
      result.rate_log.push_back({t, u, effective, opts.scheme_tag, overhead[slot]});
      slot_sum += effective;
    }
    result.mean_rate += slot_sum / n_users;

    for (const auto& tr : tracker.tracks()) {
      TrackRow row;
      row.time = t;
      row.track_id = tr.id;
      row.state = tr.s;
      try {
        const auto p = predicted_params(tr);
        row.range = p.range_m;
        row.elevation_rad = p.elevation_rad;
        row.azimuth_rad = p.azimuth_rad;
        row.sigma_r = p.sigma_r;
        row.sigma_el = p.sigma_el;
        row.sigma_az = p.sigma_az;
      } catch (const std::exception&) {
      }
      row.trace_p = tr.P.trace();
      row.trace_p_corrected = tr.P_corrected.trace();
      result.track_log.push_back(row);
    }
  }
  result.mean_rate /= n_slots;
  result.overhead_time =
      sc.kf_period_s * std::accumulate(overhead.begin(), overhead.end(), 0.0);
  result.data_time = n_slots * sc.kf_period_s - result.overhead_time;
  return result;
}

/// Feedback baseline: SSB wide-beam selection by reported power at every
/// burst, periodic narrow-beam refinement from a DFT codebook around the
/// current beam (n_refine_beams * K symbol-times of overhead per refinement),
/// static beams in between.
inline RunResult run_baseline(const ScenarioConfig& sc, const BaselineConfig& bl,
                              const RunOptions& opts = {}) {
  const SweepPlan plan = sc.sweep_plan();
  const SsbGrid ssb = build_ssb_grid(sc.seed);
  const int n_slots = static_cast<int>(std::round(sc.horizon_s / sc.kf_period_s));
  const int burst_every = static_cast<int>(std::round(sc.burst_period_s / sc.kf_period_s));
  const int refine_every =
      std::max(1, static_cast<int>(std::round(bl.refine_interval_s / sc.kf_period_s)));
  const int n_users = static_cast<int>(sc.uavs.size());
  const double burst_duration = plan.beams.size() * ssb.n_sym * sc.radio.symbol_s;

  // Narrow DFT codebook over the transmit array, index = (k_z, k_y).
  const int n_y = sc.tx_upa.n_y, n_z = sc.tx_upa.n_z;
  const int n_code = n_y * n_z;
  CxMat codebook(sc.tx_upa.n_elements(), n_code);
  for (int kz = 0; kz < n_z; ++kz)
    for (int ky = 0; ky < n_y; ++ky) {
      CxVec col(sc.tx_upa.n_elements());
      for (int pz = 0; pz < n_z; ++pz)
        for (int qy = 0; qy < n_y; ++qy)
          col(pz * n_y + qy) =
              std::polar(1.0 / std::sqrt(static_cast<double>(sc.tx_upa.n_elements())),
                         2.0 * kPi * (static_cast<double>(qy) * ky / n_y +
                                      static_cast<double>(pz) * kz / n_z));
      codebook.col(kz * n_y + ky) = col;
    }
  auto torus_dist = [&](int a, int b) {
    const int ay = a % n_y, az = a / n_y, by = b % n_y, bz = b / n_y;
    const int dy = std::min(std::abs(ay - by), n_y - std::abs(ay - by));
    const int dz = std::min(std::abs(az - bz), n_z - std::abs(az - bz));
    return dy + dz;
  };

  auto channel_at = [&](int u, double t, int slot) {
    const auto truth = propagate_truth(sc.uavs, t, opts.velocity_factor);
    const auto& pos = truth[u].position;
    const double r = pos.norm();
    return make_comm_channel(sc.tx_upa, sc.radio, r, std::asin(pos.z() / r),
                             std::atan2(pos.y(), pos.x()),
                             derive_seed(sc.seed, 0xCC, slot * 64 + u));
  };

  std::vector<int> current_code(n_users, 0);
  bool have_beam = false;
  RunResult result;
  std::vector<double> overhead(n_slots, 0.0);
  for (int slot = 0; slot < n_slots; ++slot) {
    const double t = slot * sc.kf_period_s;

    if (slot % burst_every == 0) {
      // Coarse stage: the user reports the strongest wide beam; the narrow
      // beam snaps to the codeword pointing at that sector's center. Narrow
      // search happens only in the charged refinement stage.
      for (int u = 0; u < n_users; ++u) {
        const auto ch = channel_at(u, t, slot);
        double best = -1.0;
        const SsbBeam* best_beam = &plan.beams[0];
        for (const auto& beam : plan.beams) {
          const CxVec w = ssb_tx_beamformer(sc.tx_upa, sc.radio, beam).combined();
          const double p = std::norm(ch.h.dot(w));
          if (p > best) {
            best = p;
            best_beam = &beam;
          }
        }
        const double lambda = sc.radio.wavelength();
        const double uy = sc.tx_upa.d_y * std::sin(best_beam->azimuth_rad) *
                          std::cos(best_beam->elevation_rad) / lambda * n_y;
        const double uz = sc.tx_upa.d_z * std::sin(best_beam->elevation_rad) / lambda * n_z;
        const int ky = ((static_cast<int>(std::lround(uy)) % n_y) + n_y) % n_y;
        const int kz = ((static_cast<int>(std::lround(uz)) % n_z) + n_z) % n_z;
        current_code[u] = kz * n_y + ky;
      }
      have_beam = true;
      detail::charge_overhead(overhead, sc.kf_period_s, t, burst_duration);
    }

    if (have_beam && slot % refine_every == 0 && slot % burst_every != 0) {
      // Narrow refinement around the current beam.
      for (int u = 0; u < n_users; ++u) {
        const auto ch = channel_at(u, t, slot);
        std::vector<int> order(n_code);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
          const int da = torus_dist(a, current_code[u]);
          const int db = torus_dist(b, current_code[u]);
          if (da != db) return da < db;
          return a < b;
        });
        const int n_cand = std::min(bl.n_refine_beams, n_code);
        double best = -1.0;
        int pick = current_code[u];
        for (int i = 0; i < n_cand; ++i) {
          const double p = std::norm(ch.h.dot(codebook.col(order[i])));
          if (p > best) {
            best = p;
            pick = order[i];
          }
        }
        current_code[u] = pick;
      }
      detail::charge_overhead(overhead, sc.kf_period_s, t,
                              bl.n_refine_beams * n_users * sc.radio.symbol_s);
    }

    double slot_sum = 0.0;
    for (int u = 0; u < n_users; ++u) {
      double rate = 0.0;
      if (have_beam) {
        CxMat w(sc.tx_upa.n_elements(), n_users);
        for (int v = 0; v < n_users; ++v)
          w.col(v) = std::sqrt(sc.p_max_w / n_users) * codebook.col(current_code[v]);
        const auto ch = channel_at(u, t, slot);
        rate = std::log2(1.0 + comm_receive_sinr(ch, w, u, sc.comm_noise_var));
      }
      const double effective = rate * (1.0 - overhead[slot]);
      result.rate_log.push_back({t, u, effective, opts.scheme_tag, overhead[slot]});
      slot_sum += effective;
    }
    result.mean_rate += slot_sum / n_users;
  }
  result.mean_rate /= n_slots;
  result.overhead_time =
      sc.kf_period_s * std::accumulate(overhead.begin(), overhead.end(), 0.0);
  result.data_time = n_slots * sc.kf_period_s - result.overhead_time;
  return result;
}

/// One row of a sweep summary.
struct SweepRow {
  std::string axis;
  double value = 0.0;
  std::string scheme;
  int trials = 0;
  double mean_rate = 0.0;
  double std_rate = 0.0;
};

enum class SweepAxis { kVelocityFactor, kSsbPeriod };

/// Monte-Carlo sweep over velocity factors or SSB periods: proposed and
/// baseline schemes, mean and standard deviation of the time-averaged rate.
inline std::vector<SweepRow> sweep_experiment(const ScenarioConfig& base, SweepAxis axis,
                                              const std::vector<double>& values, int trials,
                                              const std::function<void(const std::string&)>&
                                                  progress = {}) {
  std::vector<SweepRow> rows;
  const std::string axis_name =
      axis == SweepAxis::kVelocityFactor ? "velocity_factor" : "ssb_period_s";
  for (size_t vi = 0; vi < values.size(); ++vi) {
    std::vector<double> proposed_rates, baseline_rates;
    for (int trial = 0; trial < trials; ++trial) {
      ScenarioConfig sc = base;
      RunOptions opts;
      if (axis == SweepAxis::kVelocityFactor) {
        opts.velocity_factor = values[vi];
      } else {
        sc.burst_period_s = values[vi];
      }
      sc.seed = derive_seed(base.seed, 0x5EED + vi, trial);
      sc.validate();
      opts.scheme_tag = "proposed";
      proposed_rates.push_back(run_proposed(sc, opts).mean_rate);
      opts.scheme_tag = "baseline";
      baseline_rates.push_back(run_baseline(sc, sc.baseline, opts).mean_rate);
      if (progress)
        progress(axis_name + "=" + std::to_string(values[vi]) + " trial " +
                 std::to_string(trial + 1) + "/" + std::to_string(trials));
    }
    auto summarize = [&](const std::vector<double>& rates, const std::string& scheme) {
      SweepRow row;
      row.axis = axis_name;
      row.value = values[vi];
      row.scheme = scheme;
      row.trials = trials;
      const double mean =
          std::accumulate(rates.begin(), rates.end(), 0.0) / rates.size();
      double var = 0.0;
      for (double r : rates) var += (r - mean) * (r - mean);
      row.mean_rate = mean;
      row.std_rate = rates.size() > 1 ? std::sqrt(var / (rates.size() - 1)) : 0.0;
      rows.push_back(row);
    };
    summarize(proposed_rates, "proposed");
    summarize(baseline_rates, "baseline");
  }
  return rows;
}

}  // namespace ssbsim

#endif  // SSBSIM_SIM_HPP
