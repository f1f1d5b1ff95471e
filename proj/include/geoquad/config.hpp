#pragma once

// JSON experiment configuration: parse with defaults, dotted-path overrides,
// and serialization back to JSON. Unknown keys are rejected so that typos in
// files or overrides fail loudly instead of being ignored.

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "geoquad/errors.hpp"
#include "geoquad/sim.hpp"

namespace geoquad::config {

using json = nlohmann::json;

namespace detail {

inline std::string join(const std::string & prefix, const std::string & key)
{
  return prefix.empty() ? key : prefix + "." + key;
}

inline void check_object(const json & j, const std::string & path)
{
  if (!j.is_object()) { throw ConfigError(path.empty() ? "<root>" : path, "expected an object"); }
}

inline void check_keys(const json & j, const std::string & path, const std::set<std::string> & allowed)
{
  check_object(j, path);
  for (const auto & [key, value] : j.items()) {
    if (allowed.count(key) == 0) { throw ConfigError(join(path, key), "unknown key"); }
  }
}

inline double get_number(const json & j, const std::string & path)
{
  if (!j.is_number()) { throw ConfigError(path, "expected a number"); }
  return j.get<double>();
}

inline void read(const json & obj, const std::string & prefix, const char * key, double & out)
{
  if (obj.contains(key)) { out = get_number(obj.at(key), join(prefix, key)); }
}

inline void read(const json & obj, const std::string & prefix, const char * key, int & out)
{
  if (!obj.contains(key)) { return; }
  const auto & v = obj.at(key);
  if (!v.is_number_integer()) { throw ConfigError(join(prefix, key), "expected an integer"); }
  out = v.get<int>();
}

inline void read(const json & obj, const std::string & prefix, const char * key, std::uint64_t & out)
{
  if (!obj.contains(key)) { return; }
  const auto & v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(join(prefix, key), "expected a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

inline void read(const json & obj, const std::string & prefix, const char * key, bool & out)
{
  if (!obj.contains(key)) { return; }
  const auto & v = obj.at(key);
  if (!v.is_boolean()) { throw ConfigError(join(prefix, key), "expected true or false"); }
  out = v.get<bool>();
}

inline void read(const json & obj, const std::string & prefix, const char * key, std::string & out)
{
  if (!obj.contains(key)) { return; }
  const auto & v = obj.at(key);
  if (!v.is_string()) { throw ConfigError(join(prefix, key), "expected a string"); }
  out = v.get<std::string>();
}

template <int N>
Eigen::Matrix<double, N, 1> vector_from(const json & v, const std::string & path)
{
  if (!v.is_array() || v.size() != N) { throw ConfigError(path, "expected an array of " + std::to_string(N) + " numbers"); }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) { out(i) = get_number(v.at(static_cast<std::size_t>(i)), path); }
  return out;
}

template <int N>
void read(const json & obj, const std::string & prefix, const char * key, Eigen::Matrix<double, N, 1> & out)
{
  if (obj.contains(key)) { out = vector_from<N>(obj.at(key), join(prefix, key)); }
}

/// 3x3 matrix given as a scalar (times I), a diagonal [a, b, c], or nested rows.
inline void read_mat3(const json & obj, const std::string & prefix, const char * key, Mat3 & out)
{
  if (!obj.contains(key)) { return; }
  const auto & v   = obj.at(key);
  const auto path  = join(prefix, key);
  if (v.is_number()) {
    out = v.get<double>() * Mat3::Identity();
  } else if (v.is_array() && v.size() == 3 && v.at(0).is_number()) {
    out = vector_from<3>(v, path).asDiagonal();
  } else if (v.is_array() && v.size() == 3) {
    for (int r = 0; r < 3; ++r) { out.row(r) = vector_from<3>(v.at(static_cast<std::size_t>(r)), path).transpose(); }
  } else {
    throw ConfigError(path, "expected a scalar, a 3-vector diagonal or a 3x3 matrix");
  }
}

template <class Enum>
void read_enum(const json & obj, const std::string & prefix, const char * key,
               const std::vector<std::pair<std::string, Enum>> & names, Enum & out)
{
  if (!obj.contains(key)) { return; }
  std::string s;
  read(obj, prefix, key, s);
  for (const auto & [name, value] : names) {
    if (name == s) {
      out = value;
      return;
    }
  }
  std::string choices;
  for (const auto & n : names) { choices += (choices.empty() ? "" : ", ") + n.first; }
  throw ConfigError(join(prefix, key), "unknown value '" + s + "' (expected one of: " + choices + ")");
}

inline const std::vector<std::pair<std::string, TrajectoryKind>> kTrajectoryKinds = {
    {"circle", TrajectoryKind::circle},
    {"hover", TrajectoryKind::hover},
    {"waypoint_polynomial", TrajectoryKind::waypoint_polynomial}};
inline const std::vector<std::pair<std::string, YawMode>> kYawModes = {{"fixed", YawMode::fixed},
                                                                      {"tangent", YawMode::tangent}};
inline const std::vector<std::pair<std::string, RateMode>> kRateModes = {{"kinematic", RateMode::kinematic},
                                                                        {"torque", RateMode::torque}};
inline const std::vector<std::pair<std::string, ControllerKind>> kControllerKinds = {
    {"lqr", ControllerKind::lqr}, {"mpc", ControllerKind::mpc}, {"cascade", ControllerKind::cascade}};
inline const std::vector<std::pair<std::string, Discretization>> kDiscretizations = {
    {"euler", Discretization::euler}, {"exact", Discretization::exact}};
inline const std::vector<std::pair<std::string, StartMode>> kStartModes = {{"rest", StartMode::rest},
                                                                          {"reference", StartMode::reference}};

template <class Enum>
std::string name_of(const std::vector<std::pair<std::string, Enum>> & names, Enum v)
{
  for (const auto & [name, value] : names) {
    if (value == v) { return name; }
  }
  return "unknown";
}

inline void parse_trajectory(const json & j, const std::string & p, TrajectorySpec & t)
{
  check_keys(j, p, {"kind", "radius", "period", "center", "altitude", "yaw_mode", "yaw", "duration", "waypoints"});
  read_enum(j, p, "kind", kTrajectoryKinds, t.kind);
  read(j, p, "radius", t.radius);
  read(j, p, "period", t.period);
  read(j, p, "center", t.center);
  read(j, p, "altitude", t.altitude);
  read_enum(j, p, "yaw_mode", kYawModes, t.yaw_mode);
  read(j, p, "yaw", t.yaw);
  read(j, p, "duration", t.duration);
  if (j.contains("waypoints")) {
    const auto & w = j.at("waypoints");
    if (!w.is_array()) { throw ConfigError(join(p, "waypoints"), "expected an array of 3-vectors"); }
    t.waypoints.clear();
    for (const auto & e : w) { t.waypoints.push_back(vector_from<3>(e, join(p, "waypoints"))); }
  }
}

inline void parse_plant(const json & j, const std::string & p, QuadParams & q)
{
  check_keys(j, p, {"mass", "inertia", "drag_D", "drag_E", "drag_F", "g", "rate_mode", "tau_omega"});
  read(j, p, "mass", q.mass);
  read_mat3(j, p, "inertia", q.inertia);
  read_mat3(j, p, "drag_D", q.drag_D);
  read_mat3(j, p, "drag_E", q.drag_E);
  read_mat3(j, p, "drag_F", q.drag_F);
  read(j, p, "g", q.g);
  read_enum(j, p, "rate_mode", kRateModes, q.rate_mode);
  read(j, p, "tau_omega", q.tau_omega);
}

inline void parse_weights(const json & j, const std::string & p, Mat3 & q_theta, Mat3 & q_v, Mat3 & q_p, Mat3 & q_int,
                          double & r_f, double & r_omega)
{
  read_mat3(j, p, "Q_theta", q_theta);
  read_mat3(j, p, "Q_v", q_v);
  read_mat3(j, p, "Q_p", q_p);
  read_mat3(j, p, "Q_int", q_int);
  read(j, p, "R_f", r_f);
  read(j, p, "R_omega", r_omega);
}

inline void parse_controller(const json & j, const std::string & p, ControllerSettings & c, bool & du_bounds_given)
{
  check_keys(j, p, {"kind", "discretization", "lqr", "mpc", "cascade"});
  read_enum(j, p, "kind", kControllerKinds, c.kind);
  read_enum(j, p, "discretization", kDiscretizations, c.discretization);
  if (j.contains("lqr")) {
    const auto & l  = j.at("lqr");
    const auto path = join(p, "lqr");
    check_keys(l, path, {"Q_theta", "Q_v", "Q_p", "Q_int", "R_f", "R_omega", "augmented", "c1"});
    auto & w = c.lqr.weights;
    parse_weights(l, path, w.Q_theta, w.Q_v, w.Q_p, w.Q_int, w.R_f, w.R_omega);
    read(l, path, "augmented", c.lqr.augmented);
    read(l, path, "c1", c.lqr.c1);
  }
  if (j.contains("mpc")) {
    const auto & m  = j.at("mpc");
    const auto path = join(p, "mpc");
    check_keys(m, path,
               {"N_h", "Q_theta", "Q_v", "Q_p", "Q_int", "R_f", "R_omega", "du_min", "du_max", "time_varying", "qp_tol",
                "qp_max_iter", "augmented", "c1"});
    auto & w = c.mpc.config;
    read(m, path, "N_h", w.horizon);
    parse_weights(m, path, w.Q_theta, w.Q_v, w.Q_p, w.Q_int, w.R_f, w.R_omega);
    read(m, path, "du_min", w.du_min);
    read(m, path, "du_max", w.du_max);
    du_bounds_given = m.contains("du_min") || m.contains("du_max");
    read(m, path, "time_varying", w.time_varying);
    read(m, path, "qp_tol", w.qp_tol);
    read(m, path, "qp_max_iter", w.qp_max_iter);
    read(m, path, "augmented", c.mpc.augmented);
    read(m, path, "c1", c.mpc.c1);
  }
  if (j.contains("cascade")) {
    const auto & g  = j.at("cascade");
    const auto path = join(p, "cascade");
    check_keys(g, path, {"kp_pos", "ki_pos", "kd_vel", "k_att", "rate_feedforward"});
    read(g, path, "kp_pos", c.cascade.kp_pos);
    read(g, path, "ki_pos", c.cascade.ki_pos);
    read(g, path, "kd_vel", c.cascade.kd_vel);
    read(g, path, "k_att", c.cascade.k_att);
    read(g, path, "rate_feedforward", c.cascade.rate_feedforward);
  }
}

inline json mat3_json(const Mat3 & m)
{
  if (m.isApprox(Mat3(m.diagonal().asDiagonal()), 0.0)) {
    return {m(0, 0), m(1, 1), m(2, 2)};
  }
  json rows = json::array();
  for (int r = 0; r < 3; ++r) { rows.push_back({m(r, 0), m(r, 1), m(r, 2)}); }
  return rows;
}

template <int N>
json vec_json(const Eigen::Matrix<double, N, 1> & v)
{
  json a = json::array();
  for (int i = 0; i < N; ++i) { a.push_back(v(i)); }
  return a;
}

}  // namespace detail

/// Input bounds default to df in +-0.5 m g and dw in +-2 rad/s per axis.
inline void default_input_bounds(MpcConfig & cfg, const QuadParams & plant)
{
  const double df = 0.5 * plant.mass * plant.g;
  cfg.du_max      = Vec4(df, 2.0, 2.0, 2.0);
  cfg.du_min      = -cfg.du_max;
}

/// Builds an ExperimentConfig from a JSON document; absent keys keep their defaults.
/// Throws ConfigError naming the offending key. Does not call validate().
inline ExperimentConfig from_json(const json & j)
{
  using namespace detail;
  check_keys(j, "",
             {"name", "dt", "duration", "decimation", "divergence_threshold", "trajectory", "plant", "controller",
              "mismatch", "noise", "initial"});
  ExperimentConfig cfg;
  read(j, "", "name", cfg.name);
  read(j, "", "dt", cfg.dt);
  read(j, "", "duration", cfg.duration);
  read(j, "", "decimation", cfg.decimation);
  read(j, "", "divergence_threshold", cfg.divergence_threshold);
  // The trajectory spans the run unless stated otherwise.
  cfg.trajectory.duration = cfg.duration;
  if (j.contains("trajectory")) { parse_trajectory(j.at("trajectory"), "trajectory", cfg.trajectory); }
  if (j.contains("plant")) { parse_plant(j.at("plant"), "plant", cfg.plant); }
  bool bounds_given = false;
  if (j.contains("controller")) { parse_controller(j.at("controller"), "controller", cfg.controller, bounds_given); }
  if (!bounds_given) { default_input_bounds(cfg.controller.mpc.config, cfg.plant); }
  if (j.contains("mismatch")) {
    const auto & m = j.at("mismatch");
    check_keys(m, "mismatch", {"drag_in_plant", "drag_in_model"});
    read(m, "mismatch", "drag_in_plant", cfg.mismatch.drag_in_plant);
    read(m, "mismatch", "drag_in_model", cfg.mismatch.drag_in_model);
  }
  if (j.contains("noise")) {
    const auto & n = j.at("noise");
    check_keys(n, "noise", {"pos_std", "vel_std", "att_std", "seed"});
    read(n, "noise", "pos_std", cfg.noise.pos_std);
    read(n, "noise", "vel_std", cfg.noise.vel_std);
    read(n, "noise", "att_std", cfg.noise.att_std);
    read(n, "noise", "seed", cfg.noise.seed);
  }
  if (j.contains("initial")) {
    const auto & i = j.at("initial");
    check_keys(i, "initial", {"mode", "pos_offset", "vel_offset", "att_offset"});
    read_enum(i, "initial", "mode", kStartModes, cfg.initial.mode);
    read(i, "initial", "pos_offset", cfg.initial.pos_offset);
    read(i, "initial", "vel_offset", cfg.initial.vel_offset);
    read(i, "initial", "att_offset", cfg.initial.att_offset);
  }
  return cfg;
}

/// Full serialization; from_json(to_json(c)) reproduces c.
inline json to_json(const ExperimentConfig & c)
{
  using namespace detail;
  json j;
  j["name"]                 = c.name;
  j["dt"]                   = c.dt;
  j["duration"]             = c.duration;
  j["decimation"]           = c.decimation;
  j["divergence_threshold"] = c.divergence_threshold;

  const auto & t = c.trajectory;
  json wps       = json::array();
  for (const auto & w : t.waypoints) { wps.push_back(vec_json<3>(w)); }
  j["trajectory"] = {{"kind", name_of(kTrajectoryKinds, t.kind)},
                     {"radius", t.radius},
                     {"period", t.period},
                     {"center", vec_json<3>(t.center)},
                     {"altitude", t.altitude},
                     {"yaw_mode", name_of(kYawModes, t.yaw_mode)},
                     {"yaw", t.yaw},
                     {"duration", t.duration},
                     {"waypoints", wps}};

  const auto & q = c.plant;
  j["plant"]     = {{"mass", q.mass},
                    {"inertia", mat3_json(q.inertia)},
                    {"drag_D", mat3_json(q.drag_D)},
                    {"drag_E", mat3_json(q.drag_E)},
                    {"drag_F", mat3_json(q.drag_F)},
                    {"g", q.g},
                    {"rate_mode", name_of(kRateModes, q.rate_mode)},
                    {"tau_omega", q.tau_omega}};

  const auto & l = c.controller.lqr;
  const auto & m = c.controller.mpc;
  const auto & g = c.controller.cascade;
  j["controller"] = {
      {"kind", name_of(kControllerKinds, c.controller.kind)},
      {"discretization", name_of(kDiscretizations, c.controller.discretization)},
      {"lqr",
       {{"Q_theta", mat3_json(l.weights.Q_theta)},
        {"Q_v", mat3_json(l.weights.Q_v)},
        {"Q_p", mat3_json(l.weights.Q_p)},
        {"Q_int", mat3_json(l.weights.Q_int)},
        {"R_f", l.weights.R_f},
        {"R_omega", l.weights.R_omega},
        {"augmented", l.augmented},
        {"c1", l.c1}}},
      {"mpc",
       {{"N_h", m.config.horizon},
        {"Q_theta", mat3_json(m.config.Q_theta)},
        {"Q_v", mat3_json(m.config.Q_v)},
        {"Q_p", mat3_json(m.config.Q_p)},
        {"Q_int", mat3_json(m.config.Q_int)},
        {"R_f", m.config.R_f},
        {"R_omega", m.config.R_omega},
        {"du_min", vec_json<4>(m.config.du_min)},
        {"du_max", vec_json<4>(m.config.du_max)},
        {"time_varying", m.config.time_varying},
        {"qp_tol", m.config.qp_tol},
        {"qp_max_iter", m.config.qp_max_iter},
        {"augmented", m.augmented},
        {"c1", m.c1}}},
      {"cascade",
       {{"kp_pos", g.kp_pos},
        {"ki_pos", g.ki_pos},
        {"kd_vel", g.kd_vel},
        {"k_att", g.k_att},
        {"rate_feedforward", g.rate_feedforward}}}};

  j["mismatch"] = {{"drag_in_plant", c.mismatch.drag_in_plant}, {"drag_in_model", c.mismatch.drag_in_model}};
  j["noise"]    = {{"pos_std", c.noise.pos_std},
                   {"vel_std", c.noise.vel_std},
                   {"att_std", c.noise.att_std},
                   {"seed", c.noise.seed}};
  j["initial"]  = {{"mode", name_of(kStartModes, c.initial.mode)},
                   {"pos_offset", vec_json<3>(c.initial.pos_offset)},
                   {"vel_offset", vec_json<3>(c.initial.vel_offset)},
                   {"att_offset", vec_json<3>(c.initial.att_offset)}};
  return j;
}

/// Parses the right-hand side of an override: JSON if it parses, else a plain string.
inline json parse_override_value(const std::string & text)
{
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded()) { return json(text); }
  return v;
}

/// Applies "a.b.c=value" to a JSON document, creating intermediate objects.
inline void apply_override(json & doc, const std::string & assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) { throw ConfigError(assignment, "override must have the form key=value"); }
  const std::string path = assignment.substr(0, eq);
  json * node            = &doc;
  std::size_t start      = 0;
  while (true) {
    const auto dot          = path.find('.', start);
    const std::string part  = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) { throw ConfigError(path, "empty path component"); }
    if (!node->is_object()) { throw ConfigError(path, "cannot descend into a non-object"); }
    if (dot == std::string::npos) {
      (*node)[part] = parse_override_value(assignment.substr(eq + 1));
      return;
    }
    node  = &(*node)[part];
    if (node->is_null()) { *node = json::object(); }
    start = dot + 1;
  }
}

inline json read_json_file(const std::string & path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("config", "cannot open '" + path + "'"); }
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error & e) {
    throw ConfigError("config", "'" + path + "' is not valid JSON: " + e.what());
  }
}

/// File -> overrides -> typed config -> validate().
inline ExperimentConfig load(const json & doc, const std::vector<std::string> & overrides = {})
{
  json patched = doc;
  for (const auto & o : overrides) { apply_override(patched, o); }
  ExperimentConfig cfg = from_json(patched);
  cfg.validate();
  return cfg;
}

/// A suite is {"name", "base": <experiment>, "runs": [<partial experiment>, ...]};
/// each run is merge-patched onto the base. A plain experiment document is
/// treated as a suite over the three controller kinds. Overrides apply to the base.
inline std::vector<ExperimentConfig> load_suite(const json & doc, const std::vector<std::string> & overrides = {})
{
  json base;
  json runs;
  std::string suite_name;
  if (doc.is_object() && doc.contains("base")) {
    detail::check_keys(doc, "", {"name", "base", "runs"});
    base = doc.at("base");
    runs = doc.value("runs", json::array());
    detail::read(doc, "", "name", suite_name);
  } else {
    base = doc;
    runs = json::array();
    for (const char * kind : {"lqr", "mpc", "cascade"}) {
      runs.push_back({{"controller", {{"kind", kind}}}});
    }
  }
  if (!runs.is_array() || runs.empty()) { throw ConfigError("runs", "expected a non-empty array"); }
  for (const auto & o : overrides) { apply_override(base, o); }

  std::vector<ExperimentConfig> out;
  std::set<std::string> names;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    json merged = base;
    merged.merge_patch(runs[i]);
    if (!runs[i].contains("name")) {
      const std::string stem = suite_name.empty() ? base.value("name", std::string("run")) : suite_name;
      std::string kind = "mpc";
      if (merged.contains("controller") && merged["controller"].is_object()) {
        kind = merged["controller"].value("kind", kind);
      }
      merged["name"] = stem + "_" + kind;
    }
    ExperimentConfig cfg = from_json(merged);
    cfg.validate();
    if (!names.insert(cfg.name).second) { throw ConfigError("runs", "duplicate run name '" + cfg.name + "'"); }
    out.push_back(std::move(cfg));
  }
  return out;
}

}  // namespace geoquad::config
