#pragma once

// Run artifacts: per-step CSV, summary JSON, comparison CSV, linearized-model
// dump. Files are written to a temporary name and renamed on completion, so a
// reader never sees a partial artifact.

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "geoquad/errors.hpp"
#include "geoquad/error_model.hpp"
#include "geoquad/sim.hpp"

namespace geoquad::io {

inline constexpr const char * kCsvHeader =
    "t,px,py,pz,vx,vy,vz,yaw,pitch,roll,wx,wy,wz,f,dwx,dwy,dwz,df,err_p,err_v,err_th,qp_iters,qp_kkt";

/// Locale-independent, round-trippable enough for plotting and byte-stable across runs.
inline std::string fmt_double(double x)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

inline std::string csv_row(const RunRow & r)
{
  std::string s;
  s.reserve(320);
  auto put = [&](double x) {
    if (!s.empty()) { s += ','; }
    s += fmt_double(x);
  };
  put(r.t);
  for (int i = 0; i < 3; ++i) { put(r.p(i)); }
  for (int i = 0; i < 3; ++i) { put(r.v(i)); }
  for (int i = 0; i < 3; ++i) { put(r.ypr(i)); }
  for (int i = 0; i < 3; ++i) { put(r.omega(i)); }
  put(r.thrust);
  put(r.du(1));
  put(r.du(2));
  put(r.du(3));
  put(r.du(0));
  put(r.err_p);
  put(r.err_v);
  put(r.err_th_deg);
  s += ',' + std::to_string(r.qp_iters);
  put(r.qp_kkt);
  return s;
}

inline std::string to_csv(const RunResult & r)
{
  std::string out = std::string(kCsvHeader) + '\n';
  for (const auto & row : r.rows) { out += csv_row(row) + '\n'; }
  return out;
}

/// Summary without wall-clock fields, so it is reproducible byte for byte.
inline nlohmann::json summary_json(const RunResult & r)
{
  const auto & s = r.summary;
  return {{"name", r.name},
          {"controller", to_string(r.controller)},
          {"status", r.status == RunStatus::ok ? "ok" : "diverged"},
          {"message", r.message},
          {"steps", r.rows.size()},
          {"pos_err_ss", s.pos_err_ss},
          {"vel_err_ss", s.vel_err_ss},
          {"att_err_ss", s.att_err_ss},
          {"pos_err_peak", s.pos_err_peak},
          {"vel_err_peak", s.vel_err_peak},
          {"att_err_peak", s.att_err_peak},
          {"rmse", s.rmse},
          {"qp_iters_mean", s.qp_iters_mean},
          {"qp_iters_max", s.qp_iters_max},
          {"qp_max_iter_events", s.qp_max_iter_events}};
}

inline std::string comparison_csv(const ComparisonTable & t)
{
  std::string out = "kind,name_i,name_j,pos_err_ss,vel_err_ss,att_err_ss,pos_err_peak,rmse\n";
  for (std::size_t i = 0; i < t.names.size(); ++i) {
    const auto & s = t.summaries[i];
    out += "run," + t.names[i] + ",," + fmt_double(s.pos_err_ss) + ',' + fmt_double(s.vel_err_ss) + ',' +
           fmt_double(s.att_err_ss) + ',' + fmt_double(s.pos_err_peak) + ',' + fmt_double(s.rmse) + '\n';
  }
  for (const auto & p : t.ratios) {
    out += "ratio," + t.names[p.i] + ',' + t.names[p.j] + ',' + fmt_double(p.pos_ratio) + ',' +
           fmt_double(p.vel_ratio) + ',' + fmt_double(p.att_ratio) + ",,\n";
  }
  return out;
}

/// One line per timestep: k, then A row-major, then B row-major.
inline std::string model_csv(const LinearizedModel & m)
{
  std::string out;
  for (std::size_t k = 0; k < m.size(); ++k) {
    out += std::to_string(k);
    for (Eigen::Index r = 0; r < m.A[k].rows(); ++r) {
      for (Eigen::Index c = 0; c < m.A[k].cols(); ++c) { out += ',' + fmt_double(m.A[k](r, c)); }
    }
    for (Eigen::Index r = 0; r < m.B[k].rows(); ++r) {
      for (Eigen::Index c = 0; c < m.B[k].cols(); ++c) { out += ',' + fmt_double(m.B[k](r, c)); }
    }
    out += '\n';
  }
  return out;
}

/// Writes `content` to `<path>.tmp` and renames it over `path`.
inline void write_atomic(const std::filesystem::path & path, const std::string & content)
{
  if (path.has_parent_path()) { std::filesystem::create_directories(path.parent_path()); }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) { throw Error("cannot open '" + tmp.string() + "' for writing"); }
    out << content;
    out.flush();
    if (!out) { throw Error("write to '" + tmp.string() + "' failed"); }
  }
  std::filesystem::rename(tmp, path);
}

/// `<dir>/<name>.csv` and `<dir>/<name>.summary.json`.
inline void write_run(const std::filesystem::path & dir, const RunResult & r)
{
  write_atomic(dir / (r.name + ".csv"), to_csv(r));
  write_atomic(dir / (r.name + ".summary.json"), summary_json(r).dump(2) + '\n');
}

}  // namespace geoquad::io
