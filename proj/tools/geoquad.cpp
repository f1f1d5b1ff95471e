// geoquad command-line front end.
//
//   geoquad run            --config exp.json [--out dir] [--seed n] [--override k=v]...
//   geoquad compare        --config suite.json [--out dir] [--jobs n]
//   geoquad sweep          --config exp.json --key dt --values 0.002,0.001 [--jobs n]
//   geoquad validate-model [--config exp.json] [--eps 1e-5] [--samples 20] [--tol 1e-4]
//   geoquad version
//
// Exit codes: 0 success, 1 divergence or runtime failure, 2 usage or config error.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "geoquad/config.hpp"
#include "geoquad/io.hpp"
#include "geoquad/sim.hpp"

namespace {

using namespace geoquad;
namespace fs = std::filesystem;

constexpr int kExitOk      = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig  = 2;

struct CommonOptions
{
  std::string config_path;
  std::string out_dir;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

fs::path output_dir(const CommonOptions & o)
{
  if (!o.out_dir.empty()) { return o.out_dir; }
  if (const char * env = std::getenv("GEOQUAD_OUT"); env != nullptr && *env != '\0') { return env; }
  return "out";
}

std::vector<std::string> all_overrides(const CommonOptions & o)
{
  std::vector<std::string> out = o.overrides;
  if (o.seed) { out.push_back("noise.seed=" + std::to_string(*o.seed)); }
  return out;
}

void print_summary(const RunResult & r, double seconds)
{
  const auto & s = r.summary;
  std::printf("%-24s %-8s %-9s pos_ss=%.4g m  vel_ss=%.4g m/s  att_ss=%.4g deg  rmse=%.4g m  (%.2f s)\n",
              r.name.c_str(), to_string(r.controller), r.status == RunStatus::ok ? "ok" : "DIVERGED", s.pos_err_ss,
              s.vel_err_ss, s.att_err_ss, s.rmse, seconds);
  if (r.status != RunStatus::ok) { std::fprintf(stderr, "%s: %s\n", r.name.c_str(), r.message.c_str()); }
  if (s.qp_max_iter_events > 0) {
    std::fprintf(stderr, "warning: %s: QP hit the iteration limit on %d steps\n", r.name.c_str(),
                 s.qp_max_iter_events);
  }
}

/// Runs every config with at most `jobs` worker threads; results keep input order.
std::vector<RunResult> run_all(const std::vector<ExperimentConfig> & cfgs, int jobs)
{
  std::vector<RunResult> results(cfgs.size());
  std::vector<double> seconds(cfgs.size(), 0.0);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cfgs.size(); i = next++) {
      const auto t0 = std::chrono::steady_clock::now();
      results[i]    = run(cfgs[i]);
      seconds[i]    = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(cfgs.size())));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) { pool.emplace_back(worker); }
  worker();
  for (auto & th : pool) { th.join(); }
  for (std::size_t i = 0; i < cfgs.size(); ++i) { print_summary(results[i], seconds[i]); }
  return results;
}

int any_diverged(const std::vector<RunResult> & results)
{
  for (const auto & r : results) {
    if (r.status != RunStatus::ok) { return kExitFailure; }
  }
  return kExitOk;
}

int cmd_run(const CommonOptions & o)
{
  const auto doc = config::read_json_file(o.config_path);
  if (doc.is_object() && doc.contains("base")) {
    throw ConfigError("config", "'" + o.config_path + "' is a suite; use the compare verb");
  }
  const ExperimentConfig cfg = config::load(doc, all_overrides(o));
  const auto results         = run_all({cfg}, 1);
  io::write_run(output_dir(o), results.front());
  return any_diverged(results);
}

int cmd_compare(const CommonOptions & o)
{
  const auto doc  = config::read_json_file(o.config_path);
  const auto cfgs = config::load_suite(doc, all_overrides(o));
  if (cfgs.size() < 2) { throw ConfigError("runs", "compare needs at least two runs"); }
  for (const auto & c : cfgs) {
    if (c.scenario_key() != cfgs.front().scenario_key()) {
      throw ConfigError("runs", "run '" + c.name + "' does not share the scenario of '" + cfgs.front().name + "'");
    }
  }
  const auto results = run_all(cfgs, o.jobs);
  const fs::path dir = output_dir(o);
  for (const auto & r : results) { io::write_run(dir, r); }
  const ComparisonTable table = compare(results);
  io::write_atomic(dir / "comparison.csv", io::comparison_csv(table));
  for (const auto & p : table.ratios) {
    std::printf("%s / %s: pos %.4g  vel %.4g  att %.4g\n", table.names[p.i].c_str(), table.names[p.j].c_str(),
                p.pos_ratio, p.vel_ratio, p.att_ratio);
  }
  return any_diverged(results);
}

std::vector<std::string> split_values(const std::string & text)
{
  // A JSON array is taken as is; otherwise split on commas outside brackets.
  std::vector<std::string> out;
  const auto arr = nlohmann::json::parse(text, nullptr, false);
  if (!arr.is_discarded() && arr.is_array()) {
    for (const auto & v : arr) { out.push_back(v.dump()); }
    return out;
  }
  int depth = 0;
  std::string cur;
  for (char c : text) {
    if (c == '[' || c == '{') { ++depth; }
    if (c == ']' || c == '}') { --depth; }
    if (c == ',' && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) { out.push_back(cur); }
  return out;
}

std::string sanitize(std::string s)
{
  for (auto & c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') { c = '_'; }
  }
  return s;
}

int cmd_sweep(const CommonOptions & o, const std::string & key, const std::string & values)
{
  const auto doc  = config::read_json_file(o.config_path);
  const auto list = split_values(values);
  if (list.empty()) { throw ConfigError("values", "empty value list"); }
  std::vector<ExperimentConfig> cfgs;
  for (const auto & v : list) {
    auto ovr = all_overrides(o);
    ovr.push_back(key + "=" + v);
    ExperimentConfig cfg = config::load(doc, ovr);
    cfg.name             = cfg.name + "_" + sanitize(key) + "_" + sanitize(v);
    cfgs.push_back(std::move(cfg));
  }
  const auto results = run_all(cfgs, o.jobs);
  const fs::path dir = output_dir(o);
  std::string table  = "value,name,status,pos_err_ss,vel_err_ss,att_err_ss,pos_err_peak,rmse\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto & r = results[i];
    io::write_run(dir, r);
    std::string value = list[i];
    std::replace(value.begin(), value.end(), ',', ';');
    table += value + ',' + r.name + ',' + (r.status == RunStatus::ok ? "ok" : "diverged") + ',' +
             io::fmt_double(r.summary.pos_err_ss) + ',' + io::fmt_double(r.summary.vel_err_ss) + ',' +
             io::fmt_double(r.summary.att_err_ss) + ',' + io::fmt_double(r.summary.pos_err_peak) + ',' +
             io::fmt_double(r.summary.rmse) + '\n';
  }
  io::write_atomic(dir / ("sweep_" + sanitize(key) + ".csv"), table);
  return any_diverged(results);
}

int cmd_validate_model(const CommonOptions & o, double eps, int samples, double tol, const std::string & dump)
{
  ExperimentConfig cfg;
  if (!o.config_path.empty()) {
    cfg = config::load(config::read_json_file(o.config_path), all_overrides(o));
  } else if (!o.overrides.empty()) {
    cfg = config::load(nlohmann::json::object(), all_overrides(o));
  }
  if (!(eps > 0.0)) { throw ConfigError("eps", "must be > 0"); }
  if (samples < 1) { throw ConfigError("samples", "must be >= 1"); }
  const auto t0 = std::chrono::steady_clock::now();
  const ModelValidation v =
      validate_linearization(cfg.trajectory, cfg.plant, cfg.dt, eps, static_cast<std::size_t>(samples));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("max relative residual %.3e (abs %.3e) at step %zu column %d; %zu samples, eps=%g, dt=%g, %.2f s\n",
              v.max_rel_residual, v.max_abs_residual, v.worst_step, v.worst_column, v.steps_checked, eps, cfg.dt,
              secs);
  if (!dump.empty()) {
    LinearizeConfig lc;
    lc.augmented      = cfg.controller.kind == ControllerKind::lqr ? cfg.controller.lqr.augmented
                                                                   : cfg.controller.mpc.augmented;
    lc.c1             = cfg.controller.kind == ControllerKind::lqr ? cfg.controller.lqr.c1 : cfg.controller.mpc.c1;
    lc.dt             = cfg.dt;
    lc.drag_in_model  = cfg.mismatch.drag_in_model;
    lc.discretization = cfg.controller.discretization;
    const auto refs   = build_reference_table(cfg.trajectory, cfg.plant, cfg.dt, cfg.steps());
    io::write_atomic(dump, io::model_csv(linearize(refs, cfg.plant, lc)));
  }
  return v.max_rel_residual < tol ? kExitOk : kExitFailure;
}

void add_common(CLI::App * sub, CommonOptions & o, bool config_required, bool with_jobs)
{
  auto * c = sub->add_option("--config", o.config_path, "Experiment or suite JSON file");
  if (config_required) { c->required(); }
  c->check(CLI::ExistingFile);
  sub->add_option("--out", o.out_dir, "Output directory (default: $GEOQUAD_OUT, else ./out)");
  sub->add_option("--seed", o.seed, "Noise seed (sets noise.seed)");
  sub->add_option("--override", o.overrides, "Dotted-path override key=value (repeatable)")->take_all();
  if (with_jobs) { sub->add_option("--jobs", o.jobs, "Concurrent runs")->check(CLI::PositiveNumber); }
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Geometric quadrotor tracking toolkit"};
  app.require_subcommand(1);

  CommonOptions run_o, cmp_o, sweep_o, val_o;
  auto * run_cmd = app.add_subcommand("run", "Run one experiment");
  add_common(run_cmd, run_o, true, false);

  auto * cmp_cmd = app.add_subcommand("compare", "Run a controller suite and write the comparison table");
  add_common(cmp_cmd, cmp_o, true, true);

  std::string sweep_key, sweep_values;
  auto * sweep_cmd = app.add_subcommand("sweep", "Vary one config key over a list of values");
  add_common(sweep_cmd, sweep_o, true, true);
  sweep_cmd->add_option("--key", sweep_key, "Dotted config key")->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values or a JSON array")->required();

  double eps = 1e-5, tol = 1e-4;
  int samples = 20;
  std::string dump;
  auto * val_cmd = app.add_subcommand("validate-model", "Finite-difference check of the linearized error model");
  add_common(val_cmd, val_o, false, false);
  val_cmd->add_option("--eps", eps, "Perturbation size");
  val_cmd->add_option("--samples", samples, "Reference samples checked");
  val_cmd->add_option("--tol", tol, "Pass threshold on the max relative residual");
  val_cmd->add_option("--dump-model", dump, "Also write the linearized model as CSV");

  auto * ver_cmd = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (ver_cmd->parsed()) {
      std::printf("geoquad %s\n", GEOQUAD_VERSION);
      return kExitOk;
    }
    if (run_cmd->parsed()) { return cmd_run(run_o); }
    if (cmp_cmd->parsed()) { return cmd_compare(cmp_o); }
    if (sweep_cmd->parsed()) { return cmd_sweep(sweep_o, sweep_key, sweep_values); }
    if (val_cmd->parsed()) { return cmd_validate_model(val_o, eps, samples, tol, dump); }
  } catch (const ConfigError & e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument & e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitConfig;
}
