#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>
#include <sys/wait.h>

using namespace impact_qp;
using namespace impact_qp::testing;

namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(IMPACT_QP_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Scenario, LoadsFields) {
  const Scenario sc = load_scenario(data_path("arm_wall.json"));
  EXPECT_EQ(sc.name, "arm_wall");
  EXPECT_EQ(sc.model.num_actuated(), 3);
  EXPECT_DOUBLE_EQ(sc.duration, 1.5);
  EXPECT_DOUBLE_EQ(sc.gains.reference_velocity, 0.2);
  ASSERT_EQ(sc.world.surfaces.size(), 1u);
  EXPECT_LT((sc.world.surfaces[0].normal + Vec3::UnitX()).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(sc.bounds.v_upper(1), 2.0);
  EXPECT_DOUBLE_EQ(sc.bounds.tau_lower(2), -60.0);
  EXPECT_DOUBLE_EQ(sc.initial.q(2), -2.0);
  EXPECT_EQ(sc.mode, Mode::ImpactAware);
}

TEST(Scenario, MalformedInputIsRejected) {
  EXPECT_THROW(load_scenario(data_path("malformed.json")), ParseError);
  EXPECT_THROW(load_scenario(data_path("missing.json")), ParseError);
  nlohmann::json doc = read_json_file(data_path("arm_wall.json"));
  doc["duration"] = "long";
  EXPECT_THROW(scenario_from_json(doc, IMPACT_QP_DATA_DIR), ParseError);
  doc = read_json_file(data_path("arm_wall.json"));
  doc["mode"] = "reckless";
  EXPECT_THROW(scenario_from_json(doc, IMPACT_QP_DATA_DIR), ParseError);
  doc = read_json_file(data_path("arm_wall.json"));
  doc["initial_state"]["q"] = {0.0, 1.0};
  EXPECT_ANY_THROW(scenario_from_json(doc, IMPACT_QP_DATA_DIR));
}

TEST(ClosedLoop, ArmReachesWall) {
  const Scenario sc = load_scenario(data_path("arm_wall.json"));
  const RunResult r = run_closed_loop(sc);
  ASSERT_TRUE(r.completed) << r.failure_reason;
  ASSERT_FALSE(r.impacts.empty());
  const ImpactCheck& c = r.impacts.front();
  EXPECT_TRUE(c.aware_at_impact);
  EXPECT_NEAR(c.event.post_normal_velocity, -0.02 * c.event.pre_normal_velocity, 1e-9);
  EXPECT_LE(r.worst_violation(), 1e-3);
  EXPECT_EQ(r.infeasible_after_activation, 0);
  EXPECT_GT(r.contact_velocity(), 0.0);
}

TEST(ClosedLoop, DeterministicLogs) {
  Scenario sc = load_scenario(data_path("arm_wall.json"));
  sc.duration = 0.6;
  std::ostringstream a, b, ia, ib;
  const RunResult r1 = run_closed_loop(sc);
  const RunResult r2 = run_closed_loop(sc);
  write_run_csv(a, sc, r1);
  write_run_csv(b, sc, r2);
  write_impacts_csv(ia, sc, r1);
  write_impacts_csv(ib, sc, r2);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(ia.str(), ib.str());
  EXPECT_NE(a.str().find(kRunLogSchema), std::string::npos);
  EXPECT_EQ(r1.ticks.size(), r2.ticks.size());
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("toy2dof"), 0);
  EXPECT_EQ(cli("run --scenario " + data_path("malformed.json")), 2);
  EXPECT_EQ(cli("run --scenario " + data_path("arm_wall.json") + " --mode sideways"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("run --scenario " + data_path("impossible_bounds.json")), 3);
  EXPECT_EQ(cli("predict --state " + data_path("toy_state.json")), 0);
}

TEST(Cli, BaselineViolatesAfterImpact) {
  EXPECT_EQ(cli("run --scenario " + data_path("wall_push.json") + " --mode baseline"), 1);
}
