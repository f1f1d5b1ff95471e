#pragma once

// Closed-loop simulation: reference -> controller -> plant, with optional
// model mismatch and measurement noise, plus summary metrics.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "geoquad/controllers.hpp"
#include "geoquad/dynamics.hpp"
#include "geoquad/error_model.hpp"
#include "geoquad/errors.hpp"
#include "geoquad/lie.hpp"
#include "geoquad/mpc.hpp"
#include "geoquad/reference.hpp"

namespace geoquad {

enum class ControllerKind { lqr, mpc, cascade };

inline const char * to_string(ControllerKind k)
{
  switch (k) {
    case ControllerKind::lqr: return "lqr";
    case ControllerKind::mpc: return "mpc";
    case ControllerKind::cascade: return "cascade";
  }
  return "unknown";
}

struct LqrSettings
{
  LqrWeights weights;
  bool augmented = true;
  double c1      = 0.01;
};

struct MpcSettings
{
  MpcConfig config;
  bool augmented = false;
  double c1      = 0.01;
};

struct ControllerSettings
{
  ControllerKind kind = ControllerKind::mpc;
  LqrSettings lqr;
  MpcSettings mpc;
  CascadeGains cascade;
  Discretization discretization = Discretization::euler;
};

struct Mismatch
{
  bool drag_in_plant = true;
  bool drag_in_model = false;
};

struct NoiseSettings
{
  double pos_std     = 0.0;  // m
  double vel_std     = 0.0;  // m/s
  double att_std     = 0.0;  // rad
  std::uint64_t seed = 1;
};

enum class StartMode { rest, reference };

struct InitialCondition
{
  StartMode mode    = StartMode::reference;
  Vec3 pos_offset   = Vec3::Zero();
  Vec3 vel_offset   = Vec3::Zero();
  Vec3 att_offset   = Vec3::Zero();  // rotation vector applied on the right
};

struct ExperimentConfig
{
  std::string name = "experiment";
  TrajectorySpec trajectory;
  QuadParams plant;
  ControllerSettings controller;
  double dt       = 0.002;
  double duration = 30.0;
  int decimation  = 1;  // controller update every `decimation` plant steps
  Mismatch mismatch;
  NoiseSettings noise;
  InitialCondition initial;
  double divergence_threshold = 10.0;  // m

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(duration / dt)); }

  void validate() const
  {
    if (!(dt > 0.0)) { throw ConfigError("dt", "must be > 0"); }
    if (!(duration > 0.0)) { throw ConfigError("duration", "must be > 0"); }
    if (trajectory.kind == TrajectoryKind::circle && duration < trajectory.period - 1e-9) {
      throw ConfigError("duration", "must cover at least one trajectory period");
    }
    if (duration > trajectory.duration + 1e-9) {
      throw ConfigError("duration", "exceeds trajectory.duration");
    }
    if (decimation < 1) { throw ConfigError("decimation", "must be >= 1"); }
    if (!(divergence_threshold > 0.0)) { throw ConfigError("divergence_threshold", "must be > 0"); }
    if (noise.pos_std < 0.0 || noise.vel_std < 0.0 || noise.att_std < 0.0) {
      throw ConfigError("noise", "standard deviations must be >= 0");
    }
    try {
      trajectory.validate();
    } catch (const InvalidArgument & e) {
      throw ConfigError("trajectory", e.what());
    }
    try {
      plant.validate();
    } catch (const InvalidArgument & e) {
      throw ConfigError("plant", e.what());
    }
    try {
      if (controller.kind == ControllerKind::lqr) {
        controller.lqr.weights.validate(controller.lqr.augmented ? 12 : 9);
        if (controller.lqr.augmented && !(controller.lqr.c1 > 0.0)) { throw InvalidArgument("c1 must be > 0"); }
      } else if (controller.kind == ControllerKind::mpc) {
        controller.mpc.config.validate(controller.mpc.augmented ? 12 : 9);
        if (controller.mpc.augmented && !(controller.mpc.c1 > 0.0)) { throw InvalidArgument("c1 must be > 0"); }
      }
    } catch (const InvalidArgument & e) {
      throw ConfigError(std::string("controller.") + to_string(controller.kind), e.what());
    }
  }

  /// Everything that defines the scenario except the controller.
  std::string scenario_key() const
  {
    std::ostringstream os;
    os.precision(17);
    const auto & t = trajectory;
    os << static_cast<int>(t.kind) << '|' << t.radius << '|' << t.period << '|' << t.center.transpose() << '|'
       << t.altitude << '|' << static_cast<int>(t.yaw_mode) << '|' << t.yaw << '|' << t.duration << '|';
    for (const auto & w : t.waypoints) { os << w.transpose() << ';'; }
    os << '|' << plant.mass << '|' << plant.inertia.reshaped().transpose() << '|'
       << plant.drag_D.reshaped().transpose() << '|' << plant.g << '|' << plant.tau_omega << '|'
       << static_cast<int>(plant.rate_mode) << '|' << dt << '|' << duration << '|' << mismatch.drag_in_plant << '|'
       << mismatch.drag_in_model << '|' << noise.pos_std << '|' << noise.vel_std << '|' << noise.att_std << '|'
       << noise.seed << '|' << static_cast<int>(initial.mode) << '|' << initial.pos_offset.transpose() << '|'
       << initial.vel_offset.transpose() << '|' << initial.att_offset.transpose();
    return os.str();
  }
};

/// One logged control step.
struct RunRow
{
  double t = 0.0;
  Vec3 p, v, ypr, omega;
  double thrust = 0.0;
  Vec4 du       = Vec4::Zero();  // (df, dw)
  Vec9 xi       = Vec9::Zero();
  double err_p = 0.0, err_v = 0.0, err_th_deg = 0.0;
  int qp_iters  = 0;
  double qp_kkt = 0.0;
};

struct RunSummary
{
  double pos_err_ss  = 0.0;  // m, mean over the final 50%
  double vel_err_ss  = 0.0;  // m/s
  double att_err_ss  = 0.0;  // deg
  double pos_err_peak = 0.0;
  double vel_err_peak = 0.0;
  double att_err_peak = 0.0;
  double rmse        = 0.0;  // m, whole run
  double qp_iters_mean = 0.0;
  int qp_iters_max     = 0;
  int qp_max_iter_events = 0;
};

enum class RunStatus { ok, diverged };

struct RunResult
{
  std::string name;
  ControllerKind controller = ControllerKind::mpc;
  std::string scenario_key;
  RunStatus status = RunStatus::ok;
  std::string message;
  std::vector<RunRow> rows;
  RunSummary summary;
};

/// Steady-state window: the final 50% of the logged rows.
inline RunSummary summarize(const std::vector<RunRow> & rows)
{
  RunSummary s;
  if (rows.empty()) { return s; }
  const std::size_t start = rows.size() / 2;
  const auto window       = static_cast<double>(rows.size() - start);
  double sq = 0.0, iters = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto & r = rows[i];
    if (i >= start) {
      s.pos_err_ss += r.err_p / window;
      s.vel_err_ss += r.err_v / window;
      s.att_err_ss += r.err_th_deg / window;
    }
    s.pos_err_peak = std::max(s.pos_err_peak, r.err_p);
    s.vel_err_peak = std::max(s.vel_err_peak, r.err_v);
    s.att_err_peak = std::max(s.att_err_peak, r.err_th_deg);
    sq += r.err_p * r.err_p;
    iters += r.qp_iters;
    s.qp_iters_max = std::max(s.qp_iters_max, r.qp_iters);
  }
  s.rmse          = std::sqrt(sq / static_cast<double>(rows.size()));
  s.qp_iters_mean = iters / static_cast<double>(rows.size());
  return s;
}

/// Output of one controller evaluation.
struct ControlOutput
{
  ControlInput u;
  Vec4 du       = Vec4::Zero();
  Vec9 xi       = Vec9::Zero();
  int qp_iters  = 0;
  double qp_kkt = 0.0;
  bool qp_max_iter = false;
};

class Controller
{
public:
  virtual ~Controller() = default;
  /// `ref_index` indexes the full-rate reference table, `model_index` the
  /// per-update gain schedule or linearized model (they differ under decimation).
  virtual ControlOutput compute(const QuadState & measured, std::size_t ref_index, std::size_t model_index) = 0;
};

class LqrController final : public Controller
{
public:
  LqrController(const ReferenceTable & refs, const LinearizedModel & model, const LqrWeights & w)
      : refs_(refs), gains_(solve_lqr(model, w)), augmented_(model.augmented), c1_(model.c1), dt_(model.dt)
  {}

  ControlOutput compute(const QuadState & measured, std::size_t ref_index, std::size_t model_index) override
  {
    const ReferencePoint & ref = refs_[std::min(ref_index, refs_.size() - 1)];
    const ExtendedPose x       = measured.pose();
    ErrorState err             = invariant_error(x, ref.pose());
    if (augmented_) { err.xi_int = integral_; }
    ControlOutput out;
    const MatX & gain = gains_.K[std::min(model_index, gains_.size() - 1)];
    out.u  = lqr_control(err, gain, ref, error_rotation(x, ref.pose()), &out.du);
    out.xi = err.xi.vector();
    if (augmented_) { integral_ += dt_ * (err.xi.v + c1_ * err.xi.p); }
    return out;
  }

  const GainSchedule & gains() const { return gains_; }

private:
  const ReferenceTable & refs_;
  GainSchedule gains_;
  bool augmented_;
  double c1_;
  double dt_;
  Vec3 integral_ = Vec3::Zero();
};

class MpcController final : public Controller
{
public:
  MpcController(const ReferenceTable & refs, const LinearizedModel & model, const MpcConfig & cfg)
      : refs_(refs), model_(model), cfg_(cfg)
  {
    cfg_.validate(model.n);
  }

  ControlOutput compute(const QuadState & measured, std::size_t ref_index, std::size_t model_index) override
  {
    const ReferencePoint & ref = refs_[std::min(ref_index, refs_.size() - 1)];
    const ExtendedPose x       = measured.pose();
    ErrorState err             = invariant_error(x, ref.pose());
    if (model_.augmented) { err.xi_int = integral_; }
    const MpcStep st = mpc_control(err, model_, model_index, cfg_, ref, error_rotation(x, ref.pose()), warm_);
    warm_            = st.warm_start;
    if (model_.augmented) { integral_ += model_.dt * (err.xi.v + model_.c1 * err.xi.p); }
    ControlOutput out;
    out.u           = st.u;
    out.du          = st.du;
    out.xi          = err.xi.vector();
    out.qp_iters    = st.qp.iterations;
    out.qp_kkt      = st.qp.kkt_residual;
    out.qp_max_iter = st.qp.status == qp::Status::max_iter;
    return out;
  }

private:
  const ReferenceTable & refs_;
  const LinearizedModel & model_;
  MpcConfig cfg_;
  VecX warm_;
  Vec3 integral_ = Vec3::Zero();
};

class CascadeController final : public Controller
{
public:
  CascadeController(const ReferenceTable & refs, const CascadeGains & gains, const QuadParams & params, double dt)
      : refs_(refs), gains_(gains), params_(params), dt_(dt)
  {}

  ControlOutput compute(const QuadState & measured, std::size_t ref_index, std::size_t /*model_index*/) override
  {
    const ReferencePoint & ref = refs_[std::min(ref_index, refs_.size() - 1)];
    ControlOutput out;
    out.u = cascade_control(measured, ref, gains_, params_, integral_);
    integral_ += dt_ * (ref.p - measured.pos);
    const ExtendedPose x = measured.pose();
    out.du = input_error(out.u, ref, error_rotation(x, ref.pose()));
    out.xi = invariant_error(x, ref.pose()).xi.vector();
    return out;
  }

private:
  const ReferenceTable & refs_;
  CascadeGains gains_;
  QuadParams params_;
  double dt_;
  Vec3 integral_ = Vec3::Zero();
};

inline QuadState initial_state(const ExperimentConfig & cfg, const ReferencePoint & ref0)
{
  QuadState s;
  if (cfg.initial.mode == StartMode::reference) {
    s.rot   = ref0.rot;
    s.vel   = ref0.v;
    s.omega = ref0.omega;
  } else {
    s.rot = rot_z(ref0.rot.yaw_pitch_roll()(0));
  }
  s.pos = ref0.p + cfg.initial.pos_offset;
  s.vel += cfg.initial.vel_offset;
  s.rot = s.rot * exp_so3(cfg.initial.att_offset);
  return s;
}

/// Plant parameters with the drag switched off when the scenario excludes it.
inline QuadParams plant_params(const ExperimentConfig & cfg)
{
  QuadParams p = cfg.plant;
  if (!cfg.mismatch.drag_in_plant) {
    p.drag_D.setZero();
    p.drag_E.setZero();
    p.drag_F.setZero();
  }
  return p;
}

inline RunResult run(const ExperimentConfig & cfg)
{
  cfg.validate();
  const std::size_t steps = cfg.steps();
  const QuadParams plant  = plant_params(cfg);

  // The controller model always sees the nominal parameters; drag enters it only
  // through drag_in_model.
  const ReferenceTable refs = build_reference_table(cfg.trajectory, cfg.plant, cfg.dt, steps);

  RunResult result;
  result.name         = cfg.name;
  result.controller   = cfg.controller.kind;
  result.scenario_key = cfg.scenario_key();

  LinearizedModel model;
  std::unique_ptr<Controller> ctrl;
  const double ctrl_dt = cfg.dt * cfg.decimation;
  switch (cfg.controller.kind) {
    case ControllerKind::lqr:
    case ControllerKind::mpc: {
      const bool is_lqr = cfg.controller.kind == ControllerKind::lqr;
      LinearizeConfig lc;
      lc.augmented      = is_lqr ? cfg.controller.lqr.augmented : cfg.controller.mpc.augmented;
      lc.c1             = is_lqr ? cfg.controller.lqr.c1 : cfg.controller.mpc.c1;
      lc.dt             = ctrl_dt;
      lc.drag_in_model  = cfg.mismatch.drag_in_model;
      lc.discretization = cfg.controller.discretization;
      // With decimation the model steps over every `decimation`-th reference sample.
      ReferenceTable ctrl_refs;
      for (std::size_t k = 0; k < refs.size(); k += static_cast<std::size_t>(cfg.decimation)) { ctrl_refs.push_back(refs[k]); }
      model = linearize(ctrl_refs, cfg.plant, lc);
      if (is_lqr) {
        ctrl = std::make_unique<LqrController>(refs, model, cfg.controller.lqr.weights);
      } else {
        ctrl = std::make_unique<MpcController>(refs, model, cfg.controller.mpc.config);
      }
      break;
    }
    case ControllerKind::cascade:
      ctrl = std::make_unique<CascadeController>(refs, cfg.controller.cascade, cfg.plant, ctrl_dt);
      break;
  }

  std::mt19937_64 rng(cfg.noise.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gauss3 = [&]() { return Vec3(normal(rng), normal(rng), normal(rng)); };

  QuadState state = initial_state(cfg, refs.front());
  ControlOutput out;
  result.rows.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const ReferencePoint & ref = refs[k];

    if (k % static_cast<std::size_t>(cfg.decimation) == 0) {
      QuadState meas = state;
      if (cfg.noise.pos_std > 0.0) { meas.pos += cfg.noise.pos_std * gauss3(); }
      if (cfg.noise.vel_std > 0.0) { meas.vel += cfg.noise.vel_std * gauss3(); }
      if (cfg.noise.att_std > 0.0) { meas.rot = meas.rot * exp_so3(cfg.noise.att_std * gauss3()); }
      try {
        out = ctrl->compute(meas, k, k / static_cast<std::size_t>(cfg.decimation));
      } catch (const Error & e) {
        result.status  = RunStatus::diverged;
        result.message = std::string("controller failure at t=") + std::to_string(ref.t) + ": " + e.what();
        break;
      }
      if (out.qp_max_iter) { ++result.summary.qp_max_iter_events; }
    }

    RunRow row;
    row.t      = static_cast<double>(k) * cfg.dt;
    row.p      = state.pos;
    row.v      = state.vel;
    row.ypr    = state.rot.yaw_pitch_roll();
    row.omega  = state.omega;
    row.thrust = out.u.thrust;
    row.du     = out.du;
    row.xi     = out.xi;
    row.err_p  = (ref.p - state.pos).norm();
    row.err_v  = (ref.v - state.vel).norm();
    row.err_th_deg = (state.rot.inverse() * ref.rot).angle() * 180.0 / std::numbers::pi;
    row.qp_iters   = out.qp_iters;
    row.qp_kkt     = out.qp_kkt;
    result.rows.push_back(row);

    if (!std::isfinite(row.err_p) || row.err_p > cfg.divergence_threshold) {
      result.status  = RunStatus::diverged;
      result.message = "position error exceeded " + std::to_string(cfg.divergence_threshold) + " m at t=" +
                       std::to_string(row.t);
      break;
    }
    state = step(state, out.u, plant, cfg.dt);
  }

  const int events        = result.summary.qp_max_iter_events;
  result.summary          = summarize(result.rows);
  result.summary.qp_max_iter_events = events;
  return result;
}

struct PairRatio
{
  std::size_t i = 0, j = 0;
  double pos_ratio = 1.0, vel_ratio = 1.0, att_ratio = 1.0;  // metric_i / metric_j
};

struct ComparisonTable
{
  std::vector<std::string> names;
  std::vector<RunSummary> summaries;
  std::vector<PairRatio> ratios;
};

namespace detail {
inline double ratio(double a, double b)
{
  if (a == b) { return 1.0; }
  return a / b;
}
}  // namespace detail

/// Summary table plus pairwise steady-state ratios for every i < j.
inline ComparisonTable compare(const std::vector<RunResult> & results)
{
  if (results.size() < 2) { throw InvalidArgument("compare: need at least two results"); }
  for (const auto & r : results) {
    if (r.scenario_key != results.front().scenario_key) {
      throw InvalidArgument("compare: run '" + r.name + "' does not share the scenario of '" + results.front().name + "'");
    }
  }
  ComparisonTable t;
  for (const auto & r : results) {
    t.names.push_back(r.name);
    t.summaries.push_back(r.summary);
  }
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (std::size_t j = i + 1; j < results.size(); ++j) {
      const auto & a = results[i].summary;
      const auto & b = results[j].summary;
      t.ratios.push_back({i, j, detail::ratio(a.pos_err_ss, b.pos_err_ss), detail::ratio(a.vel_err_ss, b.vel_err_ss),
                          detail::ratio(a.att_err_ss, b.att_err_ss)});
    }
  }
  return t;
}

}  // namespace geoquad
