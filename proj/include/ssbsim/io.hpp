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
// CSV emitters: one header line, '.' decimal separator, UTF-8, deterministic
// shortest-round-trip formatting.

#ifndef SSBSIM_IO_HPP
#define SSBSIM_IO_HPP

#include <cstdio>
#include <fstream>
#include <string>

#include "ssbsim/sensing.hpp"
#include "ssbsim/sim.hpp"

namespace ssbsim {

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // LF endings on every platform
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace detail

inline void write_rate_log(const std::string& path, const std::vector<RateRow>& rows) {
  auto out = detail::open_csv(path);
  out << "time,user,rate,scheme,overhead_fraction\n";
  for (const auto& r : rows)
    out << detail::fmt(r.time) << ',' << r.user << ',' << detail::fmt(r.rate) << ','
        << r.scheme << ',' << detail::fmt(r.overhead_fraction) << '\n';
}

inline void write_track_log(const std::string& path, const std::vector<TrackRow>& rows) {
  auto out = detail::open_csv(path);
  out << "time,track_id,x,y,z,vx,vy,vz,range,elevation_deg,azimuth_deg,"
         "sigma_r,sigma_el_deg,sigma_az_deg,trace_p,trace_p_corrected\n";
  for (const auto& r : rows) {
    out << detail::fmt(r.time) << ',' << r.track_id;
    for (int i = 0; i < 6; ++i) out << ',' << detail::fmt(r.state(i));
    out << ',' << detail::fmt(r.range) << ',' << detail::fmt(rad2deg(r.elevation_rad)) << ','
        << detail::fmt(rad2deg(r.azimuth_rad)) << ',' << detail::fmt(r.sigma_r) << ','
        << detail::fmt(rad2deg(r.sigma_el)) << ',' << detail::fmt(rad2deg(r.sigma_az)) << ','
        << detail::fmt(r.trace_p) << ',' << detail::fmt(r.trace_p_corrected) << '\n';
  }
}

inline void write_dd_map(const std::string& path, const Mat& dd, const DdAxes& axes) {
  auto out = detail::open_csv(path);
  out << "delay_bin,doppler_bin,range_m,velocity_mps,power\n";
  for (int i = 0; i < dd.rows(); ++i)
    for (int j = 0; j < dd.cols(); ++j)
      out << i << ',' << j << ',' << detail::fmt(axes.range_of_bin(i)) << ','
          << detail::fmt(axes.velocity_of_bin(j)) << ',' << detail::fmt(dd(i, j)) << '\n';
}

inline void write_music_spectrum(const std::string& path, const MusicResult& music,
                                 const AngleGrid& grid) {
  auto out = detail::open_csv(path);
  out << "azimuth_deg,elevation_deg,pseudospectrum\n";
  for (size_t e = 0; e < grid.el_rad.size(); ++e)
    for (size_t a = 0; a < grid.az_rad.size(); ++a)
      out << detail::fmt(rad2deg(grid.az_rad[a])) << ',' << detail::fmt(rad2deg(grid.el_rad[e]))
          << ',' << detail::fmt(music.spectrum(e, a)) << '\n';
}

inline void write_beam_pattern(const std::string& path, const BeamPattern& bp,
                               const AngleGrid& grid) {
  auto out = detail::open_csv(path);
  out << "azimuth_deg,elevation_deg,gain_db\n";
  for (size_t e = 0; e < grid.el_rad.size(); ++e)
    for (size_t a = 0; a < grid.az_rad.size(); ++a)
      out << detail::fmt(rad2deg(grid.az_rad[a])) << ',' << detail::fmt(rad2deg(grid.el_rad[e]))
          << ',' << detail::fmt(bp.gain_db(e, a)) << '\n';
}

inline void write_measurements(const std::string& path, const std::vector<Measurement>& ms) {
  auto out = detail::open_csv(path);
  out << "range_m,velocity_mps,elevation_deg,azimuth_deg,music_peak,dd_power\n";
  for (const auto& m : ms)
    out << detail::fmt(m.range_m) << ',' << detail::fmt(m.velocity_mps) << ','
        << detail::fmt(rad2deg(m.elevation_rad)) << ',' << detail::fmt(rad2deg(m.azimuth_rad))
        << ',' << detail::fmt(m.music_peak_value) << ',' << detail::fmt(m.dd_power) << '\n';
}

inline void write_sweep_summary(const std::string& path, const std::vector<SweepRow>& rows) {
  auto out = detail::open_csv(path);
  out << "axis,value,scheme,trials,mean_rate,std_rate\n";
  for (const auto& r : rows)
    out << r.axis << ',' << detail::fmt(r.value) << ',' << r.scheme << ',' << r.trials << ','
        << detail::fmt(r.mean_rate) << ',' << detail::fmt(r.std_rate) << '\n';
}

inline void write_run_summary(const std::string& path, const RunResult& result,
                              const std::string& scheme) {
  auto out = detail::open_csv(path);
  out << "scheme,mean_rate,overhead_time,data_time,beamformer_failures\n";
  out << scheme << ',' << detail::fmt(result.mean_rate) << ','
      << detail::fmt(result.overhead_time) << ',' << detail::fmt(result.data_time) << ','
      << result.beamformer_failures << '\n';
}

}  // namespace ssbsim

#endif  // SSBSIM_IO_HPP
