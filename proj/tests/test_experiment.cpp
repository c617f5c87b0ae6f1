#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cosim/harness/experiment.hpp"
#include "cosim/harness/link.hpp"
#include "cosim/harness/metrics.hpp"

using namespace cosim;
using namespace cosim::harness;
namespace fs = std::filesystem;

namespace {

ScenarioConfig roundabout() { return load_scenario(std::string(COSIM_SCENARIO_DIR) + "/roundabout.scn"); }

std::vector<LogRecord> run_in_process(const ScenarioConfig& cfg) {
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  exp.run();
  return exp.records();
}

std::string slurp(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cosim_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<LogRecord> of_vehicle(const std::vector<LogRecord>& records, int id) {
  std::vector<LogRecord> out;
  for (const auto& r : records) {
    if (r.vehicle_id == id) out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Experiment, NominalRunCompletes) {
  const auto cfg = roundabout();
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  EXPECT_EQ(exp.state(), RunState::idle);
  const auto summary = exp.run();
  EXPECT_TRUE(summary.all_complete);
  EXPECT_EQ(exp.state(), RunState::complete);
  EXPECT_EQ(summary.completion_tick.size(), 6u);
  EXPECT_EQ(exp.status().state, "complete");
  for (const auto& v : exp.status().vehicles) EXPECT_EQ(v.status, "complete");
}

TEST(Experiment, ZeroDurationGivesEmptyLog) {
  auto cfg = roundabout();
  cfg.duration = 0;
  const auto dir = scratch_dir("zero");
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link, dir.string());
  const auto summary = exp.run();
  EXPECT_EQ(summary.ticks, 0);
  EXPECT_EQ(summary.records, 0u);
  EXPECT_EQ(exp.state(), RunState::complete);
  EXPECT_EQ(slurp(summary.log_file), std::string(kLogHeader) + "\n");
}

TEST(Experiment, ClockIntegrityAndReconciliation) {
  const auto cfg = roundabout();
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  const auto summary = exp.run();
  std::size_t total = 0;
  for (const auto& v : cfg.vehicles) {
    const auto rows = of_vehicle(exp.records(), v.id);
    ASSERT_FALSE(rows.empty());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      ASSERT_EQ(rows[k].t, static_cast<double>(k + 1) * cfg.planner_dt) << "vehicle " << v.id;
    }
    EXPECT_EQ(static_cast<std::int64_t>(rows.size()), summary.completion_tick.at(v.id));
    total += rows.size();
  }
  EXPECT_EQ(total, exp.records().size());
  EXPECT_DOUBLE_EQ(summary.clock, static_cast<double>(summary.ticks) * cfg.planner_dt);
}

TEST(Experiment, Deterministic) {
  const auto cfg = roundabout();
  EXPECT_EQ(run_in_process(cfg), run_in_process(cfg));
}

TEST(Experiment, RepeatGivesIdenticalLogFiles) {
  const auto cfg = roundabout();
  const auto dir = scratch_dir("repeat");
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link, dir.string());
  const auto first = exp.run();
  exp.repeat();
  EXPECT_EQ(exp.state(), RunState::idle);
  EXPECT_EQ(exp.clock(), 0.0);
  const auto second = exp.run();
  EXPECT_EQ(fs::path(first.log_file).filename(), "run_001.csv");
  EXPECT_EQ(fs::path(second.log_file).filename(), "run_002.csv");
  EXPECT_EQ(slurp(first.log_file), slurp(second.log_file));
  EXPECT_EQ(parse_log(slurp(second.log_file)), exp.records());
  // A completed experiment resets itself on the next run.
  const auto third = exp.run();
  EXPECT_EQ(slurp(first.log_file), slurp(third.log_file));
}

TEST(Experiment, RepeatBeforeFirstRun) {
  const auto cfg = roundabout();
  const auto reference = run_in_process(cfg);
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  exp.repeat();
  exp.run();
  EXPECT_EQ(exp.records(), reference);
}

TEST(Experiment, RepeatWhileRunning) {
  const auto cfg = roundabout();
  const auto reference = run_in_process(cfg);
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  bool posted = false;
  RunOptions opts;
  opts.stop_requested = [&] {
    if (!posted && exp.tick_index() == 50) posted = exp.post(protocol::ResetCommand{});
    return false;
  };
  exp.run(opts);
  EXPECT_TRUE(posted);
  EXPECT_EQ(exp.run_number(), 2);
  EXPECT_EQ(exp.records(), reference);
}

TEST(Experiment, PauseFreezesClock) {
  const auto cfg = roundabout();
  const auto reference = run_in_process(cfg);
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  int paused_polls = 0;
  bool paused = false, resumed = false;
  RunOptions opts;
  opts.stop_requested = [&] {
    if (!paused && exp.tick_index() == 40) paused = exp.post(protocol::PauseCommand{});
    if (paused && !resumed && exp.state() == RunState::paused) {
      EXPECT_EQ(exp.tick_index(), 40);
      EXPECT_EQ(sim.ticks(), 400);
      EXPECT_EQ(exp.status().state, "paused");
      if (++paused_polls == 5) resumed = exp.post(protocol::StartCommand{});
    }
    return false;
  };
  exp.run(opts);
  EXPECT_TRUE(resumed);
  EXPECT_EQ(exp.records(), reference);
}

TEST(Experiment, WaitForStart) {
  const auto cfg = roundabout();
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  int polls = 0;
  RunOptions opts;
  opts.wait_for_start = true;
  opts.stop_requested = [&] {
    if (exp.state() == RunState::idle) {
      EXPECT_EQ(exp.tick_index(), 0);
      if (++polls == 3) exp.post(protocol::StartCommand{});
    }
    return false;
  };
  EXPECT_TRUE(exp.run(opts).all_complete);
  EXPECT_GE(polls, 3);
}

TEST(Experiment, ManualBrakeAndRelease) {
  const auto cfg = roundabout();
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  bool braked = false, released = false;
  RunOptions opts;
  opts.stop_requested = [&] {
    if (!braked && exp.tick_index() == 15) braked = exp.post(protocol::ManualDrive{1, 0.0, -1.0});
    if (!released && exp.tick_index() == 60) released = exp.post(protocol::ReleaseManual{1});
    return false;
  };
  const auto summary = exp.run(opts);
  ASSERT_TRUE(released);
  const auto rows = of_vehicle(exp.records(), 1);
  ASSERT_GT(rows.size(), 60u);
  EXPECT_GT(rows[14].v, 0.05);
  for (std::size_t k = 16; k < 60; ++k) EXPECT_EQ(rows[k].handbrake, 1) << k;
  EXPECT_EQ(rows[59].v, 0.0);
  EXPECT_EQ(rows[70].handbrake, 0);
  EXPECT_TRUE(summary.all_complete);
  EXPECT_GT(summary.completion_tick.at(1), 60);
}

TEST(Experiment, ManualRamGivesCollision) {
  const auto cfg = roundabout();
  const auto dir = scratch_dir("collision");
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link, dir.string());
  exp.post(protocol::ManualDrive{1, 0.0, -1.0});
  exp.post(protocol::ManualDrive{2, 0.0, 1.0});
  try {
    exp.run();
    FAIL() << "no collision";
  } catch (const CollisionDetected& e) {
    EXPECT_EQ(e.follower(), 2);
    EXPECT_EQ(e.leader(), 1);
    EXPECT_LE(e.gap(), 0.0);
  }
  EXPECT_EQ(exp.state(), RunState::complete);
  EXPECT_EQ(parse_log(slurp(exp.log_file())), exp.records());
}

TEST(Experiment, RealtimePacing) {
  auto cfg = roundabout();
  cfg.duration = 2.0;
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink link(sim);
  Experiment exp(cfg, link);
  RunOptions opts;
  opts.realtime_factor = 10.0;
  const auto start = std::chrono::steady_clock::now();
  const auto summary = exp.run(opts);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(summary.ticks, 20);
  EXPECT_FALSE(summary.all_complete);
  EXPECT_GE(wall, 0.19);
  EXPECT_LT(wall, 1.0);
}

TEST(Experiment, NetworkedMatchesInProcess) {
  const auto cfg = roundabout();
  const auto reference = run_in_process(cfg);
  SimulatorServer server(cfg.paths, cfg.physics_dt, 0, 0);
  NetworkLinkOptions opts;
  opts.command_port = server.command_port();
  opts.stream_port = server.stream_port();
  NetworkLink link(opts);
  Experiment exp(cfg, link);
  EXPECT_TRUE(exp.run().all_complete);
  EXPECT_EQ(exp.records(), reference);
}

TEST(Experiment, LossyLinkStillCompletes) {
  const auto cfg = roundabout();
  Simulator sim(cfg.paths, cfg.physics_dt);
  InProcessLink inner(sim);
  LossyLink link(inner, 0.5, 7);
  Experiment exp(cfg, link);
  EXPECT_TRUE(exp.run().all_complete);
  EXPECT_GT(link.dropped(), 100u);
}

TEST(Experiment, UnreachableSimulator) {
  NetworkLinkOptions opts;
  opts.command_port = 1;
  opts.stream_port = 1;
  opts.connect_timeout = std::chrono::milliseconds(200);
  EXPECT_THROW(NetworkLink link(opts), SimulatorUnreachable);
}
