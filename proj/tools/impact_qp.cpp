// impact_qp: toy2dof | run | predict
//
// Exit codes: 0 ok, 1 post-impact bound violated, 2 configuration or parse
// error, 3 infeasible QP, 4 numerical failure or time budget exceeded.
// IMPACT_QP_LOG=quiet|info|debug sets the stderr verbosity (default info).

#include "impact_qp/impact_qp.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace impact_qp;

namespace {

enum Exit { kOk = 0, kViolation = 1, kConfig = 2, kInfeasible = 3, kNumerical = 4 };

int verbosity() {
  const char* env = std::getenv("IMPACT_QP_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

void info(const std::string& msg) {
  if (verbosity() >= 1) std::cerr << "[impact_qp] " << msg << '\n';
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw ParseError("cannot write '" + (dir / name).string() + "'");
  return out;
}

void print_vec(std::ostream& out, const VecX& v) {
  out << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v(i);
  out << ']';
}

int cmd_toy2dof(const std::string& out_dir) {
  const ToyExample toy = ToyExample::paper();
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "two-link arm, q = ";
  print_vec(std::cout, toy.state.q);
  std::cout << ", qdot = ";
  print_vec(std::cout, toy.state.v);
  std::cout << "\n";
  std::ofstream csv;
  if (!out_dir.empty()) {
    csv = open_output(out_dir, "toy2dof.csv");
    csv << "# schema=impact_qp.toy2dof.v1\n"
        << "mode,kind,index,x,y\n" << std::setprecision(10);
  }
  for (const Mode mode : {Mode::Baseline, Mode::ImpactAware}) {
    const ToyResult r = solve_toy(toy, mode);
    if (!r.solution.optimal()) {
      std::cerr << to_string(mode) << ": QP " << to_string(r.solution.status) << '\n';
      return kInfeasible;
    }
    std::cout << to_string(mode) << ":\n  qdd           = ";
    print_vec(std::cout, r.qdd);
    std::cout << "\n  pre-impact    = ";
    print_vec(std::cout, r.pre_impact_velocity);
    std::cout << "\n  post-impact   = ";
    print_vec(std::cout, r.post_impact_velocity);
    std::cout << "\n  polytope      =";
    for (const auto& p : r.polytope) std::cout << " (" << p.x() << ", " << p.y() << ")";
    std::cout << '\n';
    if (csv.is_open()) {
      const auto row = [&](const char* kind, int i, double x, double y) {
        csv << to_string(mode) << ',' << kind << ',' << i << ',' << x << ',' << y << '\n';
      };
      row("pre_impact", 0, r.pre_impact_velocity(0), r.pre_impact_velocity(1));
      row("post_impact", 0, r.post_impact_velocity(0), r.post_impact_velocity(1));
      for (std::size_t i = 0; i < r.polytope.size(); ++i) {
        row("vertex", static_cast<int>(i), r.polytope[i].x(), r.polytope[i].y());
      }
    }
  }
  return kOk;
}

int cmd_run(const std::string& path, const std::string& out_dir, std::uint64_t seed,
            const std::string& mode_override, double tol) {
  Scenario sc = load_scenario(path);
  if (mode_override == "baseline") sc.mode = Mode::Baseline;
  if (mode_override == "aware") sc.mode = Mode::ImpactAware;
  info("scenario '" + sc.name + "' mode " + to_string(sc.mode) + " seed " + std::to_string(seed));
  const RunResult r = run_closed_loop(sc);
  if (!out_dir.empty()) {
    std::ofstream run = open_output(out_dir, sc.name + "_run.csv");
    write_run_csv(run, sc, r);
    std::ofstream imp = open_output(out_dir, sc.name + "_impacts.csv");
    write_impacts_csv(imp, sc, r);
  }
  std::cout << std::setprecision(6);
  std::cout << "scenario " << sc.name << " (" << to_string(sc.mode) << "): " << r.ticks.size()
            << " ticks, " << r.impacts.size() << " impacts, " << r.fallback_events
            << " slack fallbacks\n";
  for (const auto& i : r.impacts) {
    std::cout << "  impact t=" << i.event.time << " " << sc.model.frame(i.event.frame).name
              << " approach " << -i.event.pre_normal_velocity << " m/s, worst violation "
              << i.worst_violation() << '\n';
  }
  if (!r.completed) {
    std::cerr << r.failure_reason << '\n';
    return r.failure == SolveStatus::Infeasible ? kInfeasible : kNumerical;
  }
  if (r.post_impact_violation(tol)) {
    std::cerr << "post-impact bound violated by " << r.worst_violation() << '\n';
    return kViolation;
  }
  return kOk;
}

int cmd_predict(const std::string& path, const std::string& out_dir) {
  const nlohmann::json doc = read_json_file(path);
  RobotModel model;
  RobotState state;
  VecX qdd;
  double dt = 0.005;
  std::vector<ImpactConfig> configs;
  VecX forces;
  try {
    model = load_model((fs::path(path).parent_path() / doc.at("model").get<std::string>()).string());
    state.q = model.neutral_configuration();
    const VecX q = io::vecx(doc.at("q"), "q");
    if (model.floating_base()) {
      if (q.size() != model.num_actuated()) throw ParseError("q: one entry per actuated joint");
      for (int j = 0; j < model.num_actuated(); ++j) state.q(model.actuated_q_index(j)) = q(j);
      if (doc.contains("base")) {
        const Transform t = io::transform(doc.at("base"));
        const Quat quat(t.R);
        state.q.head<3>() = t.p;
        state.q.segment<4>(3) << quat.w(), quat.x(), quat.y(), quat.z();
      }
    } else {
      state.q = q;
    }
    state.v = doc.contains("v") ? io::vecx(doc.at("v"), "v") : VecX::Zero(model.nv());
    qdd = doc.contains("qdd") ? io::vecx(doc.at("qdd"), "qdd") : VecX::Zero(model.nv());
    check_dim(qdd.size(), model.nv(), "qdd");
    dt = doc.value("control_period", dt);
    for (const auto& j : doc.at("impacts")) {
      ImpactConfig c;
      const auto f = model.find_frame(j.at("frame").get<std::string>());
      if (!f || model.frame(*f).role != EndEffectorRole::Impacting) {
        throw ParseError("impacts: frames must be impacting end-effectors, in model order");
      }
      c.restitution = j.value("restitution", c.restitution);
      c.normal = io::vec3(j.at("normal"), "normal");
      c.impact_duration = j.value("impact_duration", c.impact_duration);
      c.control_period = dt;
      configs.push_back(c);
    }
    if (doc.contains("contact_forces")) forces = io::vecx(doc.at("contact_forces"), "contact_forces");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("state file: ") + e.what());
  }
  model.check_state(state);

  const EndEffectorPartition part = EndEffectorPartition::from_roles(model);
  const ImpulseDistribution d = build_distribution(model, state, part, configs);
  const Kinematics kin = compute_kinematics(model, state);
  Vec3 origin = Vec3::Zero();
  for (int f : part.established) origin += frame_position(model, kin, f);
  if (part.m1() > 0) origin /= part.m1();
  const Predictors p = Predictors::from(d, origin);

  std::ofstream file;
  if (!out_dir.empty()) file = open_output(out_dir, "predict.csv");
  std::ostream& out = out_dir.empty() ? std::cout : file;
  const int nv = model.nv();
  out << "# schema=impact_qp.predict.v1 control_period=" << dt << '\n';
  out << "quantity,index";
  for (int i = 0; i < nv; ++i) out << ",J" << i;
  for (int i = 0; i < nv; ++i) out << ",C" << i;
  out << ",value\n" << std::setprecision(12);
  const auto emit = [&](const JumpDecomposition& jd) {
    const VecX value = jd.evaluate(qdd, state.v, dt);
    for (Eigen::Index r = 0; r < jd.rows(); ++r) {
      out << jd.quantity << ',' << r;
      for (int i = 0; i < nv; ++i) out << ',' << jd.J(r, i);
      for (int i = 0; i < nv; ++i) out << ',' << jd.C(r, i);
      out << ',' << value(r) << '\n';
    }
    return value;
  };
  emit(p.joint_velocity);
  emit(compose("impulse", MatX::Identity(p.force.rows(), p.force.rows()) * d.impact_duration,
               p.force));
  emit(p.force);
  emit(p.impulsive_torque);
  emit(p.ee_velocity);
  if (p.angular_momentum) emit(*p.angular_momentum);
  if (p.com_velocity) emit(*p.com_velocity);
  if (model.floating_base() && part.m1() > 0) {
    const Vec6 dW = emit(p.wrench);
    if (forces.size() == 3 * part.m1()) {
      const Vec6 W = net_wrench(detail::frame_points(model, kin, part.established), forces, origin);
      const Vec3 dz = predict_zmp_jump(W, dW, Vec3::UnitZ());
      for (int r = 0; r < 3; ++r) {
        out << "zmp_jump," << r;
        for (int i = 0; i < 2 * nv; ++i) out << ',';
        out << ',' << dz(r) << '\n';
      }
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Impact-aware whole-body QP control"};
  app.require_subcommand(1);
  std::string out_dir, scenario, state, mode;
  std::uint64_t seed = 0;
  double tol = 1e-3;

  auto* toy = app.add_subcommand("toy2dof", "Two-link arm example in both modes");
  toy->add_option("--out", out_dir, "Output directory for CSV");

  auto* run = app.add_subcommand("run", "Closed-loop scenario");
  run->add_option("--scenario", scenario, "Scenario JSON")->required();
  run->add_option("--out", out_dir, "Output directory for CSV logs");
  run->add_option("--seed", seed, "Seed (runs are deterministic)");
  run->add_option("--mode", mode, "Override the scenario mode")
      ->check(CLI::IsMember({"baseline", "aware"}));
  run->add_option("--tol", tol, "Post-impact violation tolerance");

  auto* predict = app.add_subcommand("predict", "Jump predictions at one state");
  predict->add_option("--state", state, "State JSON")->required();
  predict->add_option("--out", out_dir, "Output directory (stdout when absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*toy) return cmd_toy2dof(out_dir);
    if (*run) return cmd_run(scenario, out_dir, seed, mode, tol);
    if (*predict) return cmd_predict(state, out_dir);
  } catch (const ParseError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const BudgetError& e) {
    std::cerr << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  }
  return kOk;
}
