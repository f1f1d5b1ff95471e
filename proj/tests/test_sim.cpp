#include <gtest/gtest.h>

#include "geoquad/io.hpp"
#include "geoquad/sim.hpp"

using namespace geoquad;

namespace {

ExperimentConfig lqr_circle()
{
  ExperimentConfig cfg;
  cfg.name            = "lqr";
  cfg.controller.kind = ControllerKind::lqr;
  return cfg;
}

}  // namespace

TEST(Run, DeterministicGivenSeed)
{
  ExperimentConfig cfg = lqr_circle();
  cfg.duration = cfg.trajectory.duration = cfg.trajectory.period = 5.0;
  cfg.noise.pos_std = 1e-3;
  cfg.noise.vel_std = 0.01;
  cfg.noise.att_std = 0.2 * std::numbers::pi / 180.0;
  cfg.noise.seed    = 7;
  const std::string a = io::to_csv(run(cfg));
  const std::string b = io::to_csv(run(cfg));
  EXPECT_EQ(a, b);
  cfg.noise.seed = 8;
  EXPECT_NE(io::to_csv(run(cfg)), a);
}

TEST(Run, CsvShape)
{
  ExperimentConfig cfg = lqr_circle();
  cfg.duration = cfg.trajectory.duration = cfg.trajectory.period = 1.0;
  const RunResult r     = run(cfg);
  const std::string csv = io::to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,px,py,pz,vx,vy,vz,yaw,pitch,roll,wx,wy,wz,f,dwx,dwy,dwz,df,err_p,err_v,err_th,qp_iters,qp_kkt");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 501);
  const std::string second = csv.substr(csv.find('\n') + 1, csv.find('\n', csv.find('\n') + 1) - csv.find('\n') - 1);
  EXPECT_EQ(std::count(second.begin(), second.end(), ','), 22);
}

TEST(Run, HalvingDtChangesSteadyStateLittle)
{
  ExperimentConfig a = lqr_circle();
  ExperimentConfig b = a;
  b.dt               = a.dt / 2.0;
  const double pa = run(a).summary.pos_err_ss;
  const double pb = run(b).summary.pos_err_ss;
  EXPECT_LT(std::abs(pa - pb) / pa, 0.2);
}

TEST(Run, ErrorWindowsShrinkWithoutMismatch)
{
  ExperimentConfig cfg         = lqr_circle();
  cfg.mismatch.drag_in_plant   = false;
  cfg.initial.pos_offset       = Vec3(0.05, -0.03, 0.02);
  // Gains near the end of the schedule feel the terminal cost; only windows ending by 30 s are checked.
  cfg.duration = cfg.trajectory.duration = 35.0;
  const RunResult r       = run(cfg);
  ASSERT_EQ(r.status, RunStatus::ok);
  // 1 s windows (500 rows); skip the first 2 s of transient.
  std::vector<double> peaks;
  for (std::size_t start = 1000; start + 500 <= 15000; start += 500) {
    double peak = 0.0;
    for (std::size_t k = start; k < start + 500; ++k) {
      peak = std::max(peak, r.rows[k].err_p + r.rows[k].err_v + r.rows[k].err_th_deg);
    }
    peaks.push_back(peak);
  }
  for (std::size_t i = 1; i < peaks.size(); ++i) { EXPECT_LE(peaks[i], peaks[i - 1] * (1.0 + 1e-9) + 1e-12) << i; }
}

TEST(Run, DecimatedControllerStillTracks)
{
  ExperimentConfig cfg = lqr_circle();
  cfg.decimation       = 5;
  const RunResult r    = run(cfg);
  ASSERT_EQ(r.status, RunStatus::ok);
  EXPECT_LT(r.summary.pos_err_ss, 0.05);
}

TEST(Run, DivergenceStopsEarly)
{
  ExperimentConfig cfg     = lqr_circle();
  cfg.initial.pos_offset   = Vec3(0.5, 0, 0);
  cfg.divergence_threshold = 0.1;
  const RunResult r        = run(cfg);
  EXPECT_EQ(r.status, RunStatus::diverged);
  EXPECT_EQ(r.rows.size(), 1u);
  EXPECT_FALSE(r.message.empty());
}

TEST(Run, ConfigValidationNamesKey)
{
  ExperimentConfig cfg = lqr_circle();
  cfg.dt               = -1.0;
  try {
    run(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError & e) {
    EXPECT_EQ(e.key(), "dt");
  }
  cfg          = lqr_circle();
  cfg.duration = 10.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Compare, RatiosShapeAndMismatch)
{
  ExperimentConfig cfg = lqr_circle();
  cfg.duration = cfg.trajectory.duration = cfg.trajectory.period = 2.0;
  const RunResult a = run(cfg);
  const ComparisonTable same = compare({a, a});
  ASSERT_EQ(same.ratios.size(), 1u);
  EXPECT_EQ(same.ratios[0].pos_ratio, 1.0);
  EXPECT_EQ(same.ratios[0].vel_ratio, 1.0);
  EXPECT_EQ(same.ratios[0].att_ratio, 1.0);

  ExperimentConfig c2 = cfg;
  c2.controller.kind  = ControllerKind::cascade;
  c2.name             = "cascade";
  const RunResult b   = run(c2);
  const ComparisonTable three = compare({a, b, a});
  EXPECT_EQ(three.names.size(), 3u);
  EXPECT_EQ(three.ratios.size(), 3u);
  EXPECT_NEAR(three.ratios[0].pos_ratio, a.summary.pos_err_ss / b.summary.pos_err_ss, 1e-15);

  ExperimentConfig other = cfg;
  other.plant.mass       = 1.2;
  EXPECT_THROW(compare({a, run(other)}), InvalidArgument);
  EXPECT_THROW(compare({a}), InvalidArgument);
}
