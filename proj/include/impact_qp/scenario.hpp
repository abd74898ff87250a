#pragma once

// Closed-loop scenarios: a robot, a world of planes, a phase machine and a
// task set. run_closed_loop() drives controller and simulator together and
// checks every post-impact bounded quantity against the simulated impact.

#include "impact_qp/controller.hpp"
#include "impact_qp/model_io.hpp"
#include "impact_qp/sim.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace impact_qp {

/// Scenario exceeded its wall-clock budget.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TaskGains {
  double reference_velocity = 0.35;  // m/s toward the surface
  double velocity_gain = 40.0;       // 1/s
  double position_stiffness = 100.0; // 1/s^2, holds the other directions
  double reach_weight = 10.0;
  double hold_weight = 1.0;
  double posture_weight = 0.1;
  double posture_stiffness = 25.0;
  double force_regularization = 1e-5;
  double force_weight = 1e-2;
  double detach_velocity = 0.1;
};

struct Scenario {
  std::string name = "scenario";
  RobotModel model;
  World world;
  Mode mode = Mode::ImpactAware;
  double duration = 1.0;
  double control_period = 0.005;
  double impact_duration = 0.005;
  double activation_distance = 0.15;
  ContactSpec foot_contact;
  BoundsSpec bounds;
  double impulse_factor = 0.4;
  bool zmp_support_polygon = false;  // hull of the established feet
  std::optional<ComVelPolygon> com_velocity;
  PhaseMachine fsm;
  TaskGains gains;
  RobotState initial;
  double max_wall_time = 30.0;

  std::vector<int> frames_with_role(EndEffectorRole role) const {
    std::vector<int> out;
    for (int f = 0; f < model.num_frames(); ++f) {
      if (model.frame(f).role == role) out.push_back(f);
    }
    return out;
  }

  /// Surface an impacting frame is aimed at: the first one applying to it.
  int target_surface(int frame) const {
    for (std::size_t s = 0; s < world.surfaces.size(); ++s) {
      if (world.surfaces[s].applies(model.frame(frame).name)) return static_cast<int>(s);
    }
    throw std::invalid_argument("no surface applies to end-effector '" +
                                model.frame(frame).name + "'");
  }

  void validate() const {
    world.validate();
    fsm.validate();
    foot_contact.validate();
    bounds.validate(model.num_actuated());
    model.check_state(initial);
    if (!(duration > 0.0) || !(control_period > 0.0) || !(impact_duration > 0.0)) {
      throw std::invalid_argument("durations must be positive");
    }
    const double ratio = control_period / world.step;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) {
      throw std::invalid_argument("control period must be a multiple of the integration step");
    }
    if (activation_distance < 0.0) throw std::invalid_argument("activation distance must be non-negative");
    for (int f : frames_with_role(EndEffectorRole::Impacting)) (void)target_surface(f);
    if (zmp_support_polygon && !model.floating_base()) {
      throw std::invalid_argument("the ZMP constraint needs a floating base");
    }
  }
};

// ---------------------------------------------------------------------------
// Loading

namespace io {

inline VecX sized(const json& doc, const char* key, int n, double fallback) {
  if (!doc.contains(key) || doc.at(key).is_null()) return VecX::Constant(n, fallback);
  const json& j = doc.at(key);
  if (j.is_number()) return VecX::Constant(n, j.get<double>());
  VecX v = vecx(j, key);
  if (v.size() != n) throw ParseError(std::string(key) + ": expected " + std::to_string(n) + " entries");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(v(i))) v(i) = fallback;
  }
  return v;
}

inline BoundsSpec bounds(const json& doc, int n, double& impulse_factor) {
  BoundsSpec b = BoundsSpec::unbounded(n);
  if (doc.is_null()) return b;
  b.q_lower = sized(doc, "q_lower", n, -kInf);
  b.q_upper = sized(doc, "q_upper", n, kInf);
  if (doc.contains("v_max")) {
    b.v_upper = sized(doc, "v_max", n, kInf);
    b.v_lower = -b.v_upper;
  } else {
    b.v_lower = sized(doc, "v_lower", n, -kInf);
    b.v_upper = sized(doc, "v_upper", n, kInf);
  }
  if (doc.contains("tau_max")) {
    b.tau_upper = sized(doc, "tau_max", n, kInf);
    b.tau_lower = -b.tau_upper;
  } else {
    b.tau_lower = sized(doc, "tau_lower", n, -kInf);
    b.tau_upper = sized(doc, "tau_upper", n, kInf);
  }
  impulse_factor = doc.value("impulse_factor", impulse_factor);
  if (doc.contains("impulse_max")) {
    b.impulse_upper = sized(doc, "impulse_max", n, kInf);
  } else {
    b.impulse_upper = impulse_factor * b.tau_upper;
  }
  b.impulse_lower = -b.impulse_upper;
  if (doc.contains("angular_momentum_max")) {
    b.angular_momentum_max = sized(doc, "angular_momentum_max", 3, kInf);
  }
  return b;
}

inline Surface surface(const json& j) {
  Surface s;
  s.name = j.value("name", std::string("surface"));
  s.point = vec3(j.at("point"), "surface point");
  s.normal = vec3(j.at("normal"), "surface normal");
  s.restitution = j.value("restitution", s.restitution);
  s.friction = j.value("friction", s.friction);
  if (j.contains("applies_to")) s.applies_to = j.at("applies_to").get<std::vector<std::string>>();
  return s;
}

}  // namespace io

/// `base_dir` resolves the relative model path.
inline Scenario scenario_from_json(const nlohmann::json& doc,
                                   const std::filesystem::path& base_dir) {
  using io::json;
  try {
    Scenario sc;
    sc.name = doc.value("name", sc.name);
    const std::filesystem::path model_path = base_dir / doc.at("model").get<std::string>();
    sc.model = load_model(model_path.string());
    const int n = sc.model.num_actuated();

    const std::string mode = doc.value("mode", std::string("aware"));
    if (mode == "aware") {
      sc.mode = Mode::ImpactAware;
    } else if (mode == "baseline") {
      sc.mode = Mode::Baseline;
    } else {
      throw ParseError("mode must be 'aware' or 'baseline'");
    }
    sc.duration = doc.value("duration", sc.duration);
    sc.control_period = doc.value("control_period", sc.control_period);
    sc.max_wall_time = doc.value("max_wall_time", sc.max_wall_time);

    const json world = doc.value("world", json::object());
    sc.world.step = world.value("step", sc.world.step);
    sc.world.stabilization = world.value("stabilization", sc.world.stabilization);
    sc.world.speed_floor = world.value("speed_floor", sc.world.speed_floor);
    if (world.contains("surfaces")) {
      for (const json& s : world.at("surfaces")) sc.world.surfaces.push_back(io::surface(s));
    }

    const json impact = doc.value("impact", json::object());
    sc.impact_duration = impact.value("impact_duration", sc.impact_duration);
    sc.activation_distance = impact.value("activation_distance", sc.activation_distance);

    const json contacts = doc.value("contacts", json::object());
    sc.foot_contact.friction = contacts.value("friction", sc.foot_contact.friction);
    sc.foot_contact.half_x = contacts.value("half_x", sc.foot_contact.half_x);
    sc.foot_contact.half_y = contacts.value("half_y", sc.foot_contact.half_y);
    sc.foot_contact.generators = contacts.value("generators", sc.foot_contact.generators);
    if (contacts.contains("normal")) sc.foot_contact.normal = io::vec3(contacts.at("normal"), "normal");

    sc.bounds = io::bounds(doc.value("bounds", json()), n, sc.impulse_factor);

    if (doc.contains("zmp") && !doc.at("zmp").is_null()) {
      const std::string support = doc.at("zmp").value("support", std::string("feet"));
      if (support != "feet") throw ParseError("zmp.support: only 'feet' is built in");
      sc.zmp_support_polygon = true;
    }
    if (doc.contains("com_velocity") && !doc.at("com_velocity").is_null()) {
      const json& c = doc.at("com_velocity");
      sc.com_velocity = ComVelPolygon::box(c.at("vx").get<double>(), c.at("vy").get<double>());
    }

    const json fsm = doc.value("fsm", json::object());
    sc.fsm.detection_threshold = fsm.value("detection_threshold", sc.fsm.detection_threshold);
    sc.fsm.admittance_setpoint = fsm.value("admittance_setpoint", sc.fsm.admittance_setpoint);
    sc.fsm.admittance_gain = fsm.value("admittance_gain", sc.fsm.admittance_gain);
    sc.fsm.start_duration = fsm.value("start_duration", sc.fsm.start_duration);
    sc.fsm.admittance_duration = fsm.value("admittance_duration", sc.fsm.admittance_duration);
    sc.fsm.detach_duration = fsm.value("detach_duration", sc.fsm.detach_duration);
    sc.fsm.reset_duration = fsm.value("reset_duration", sc.fsm.reset_duration);

    const json tasks = doc.value("tasks", json::object());
    TaskGains& g = sc.gains;
    g.reference_velocity = tasks.value("reference_velocity", g.reference_velocity);
    g.velocity_gain = tasks.value("velocity_gain", g.velocity_gain);
    g.position_stiffness = tasks.value("position_stiffness", g.position_stiffness);
    g.reach_weight = tasks.value("reach_weight", g.reach_weight);
    g.hold_weight = tasks.value("hold_weight", g.hold_weight);
    g.posture_weight = tasks.value("posture_weight", g.posture_weight);
    g.posture_stiffness = tasks.value("posture_stiffness", g.posture_stiffness);
    g.force_regularization = tasks.value("force_regularization", g.force_regularization);
    g.force_weight = tasks.value("force_weight", g.force_weight);
    g.detach_velocity = tasks.value("detach_velocity", g.detach_velocity);

    sc.initial.q = sc.model.neutral_configuration();
    sc.initial.v = VecX::Zero(sc.model.nv());
    if (doc.contains("initial_state")) {
      const json& s = doc.at("initial_state");
      if (s.contains("q")) {
        const VecX q = io::vecx(s.at("q"), "initial_state.q");
        if (q.size() != n) throw ParseError("initial_state.q: expected one entry per actuated joint");
        for (int j = 0; j < n; ++j) sc.initial.q(sc.model.actuated_q_index(j)) = q(j);
      }
      if (s.contains("base")) {
        if (!sc.model.floating_base()) throw ParseError("initial_state.base needs a floating base");
        const Transform t = io::transform(s.at("base"));
        sc.initial.q.head<3>() = t.p;
        const Quat quat(t.R);
        sc.initial.q.segment<4>(3) << quat.w(), quat.x(), quat.y(), quat.z();
      }
    }
    sc.validate();
    return sc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  const std::filesystem::path p(path);
  return scenario_from_json(read_json_file(path), p.parent_path());
}

// ---------------------------------------------------------------------------
// Closed loop

/// Post-impact check of one simulated impact against the configured bounds.
struct ImpactCheck {
  ImpactEvent event;
  Phase phase = Phase::Start;
  bool aware_at_impact = false;
  double joint_velocity_violation = 0.0;   // rad/s above the bound (<= 0 inside)
  double impulsive_torque_violation = 0.0; // N m above the bound
  std::optional<Vec3> zmp;                 // post-impact ZMP relative to the origin
  double zmp_violation = -kInf;            // m outside the polygon
  std::optional<Vec3> predicted_zmp;       // from the last control tick
  double joint_velocity_prediction_error = 0.0;  // |predicted - simulated dqdot|_inf

  double worst_violation() const {
    return std::max({joint_velocity_violation, impulsive_torque_violation,
                     zmp ? zmp_violation : -kInf});
  }
};

struct TickRecord {
  double time = 0.0;
  Phase phase = Phase::Start;
  SolveStatus status = SolveStatus::Optimal;
  bool aware = false;
  bool fallback = false;
  double slack = 0.0;
  int iterations = 0;
  double objective = 0.0;
  double distance = 0.0;        // first impacting frame to its surface
  double normal_velocity = 0.0; // approach speed of that frame
  std::optional<Vec3> zmp;      // measured, relative to the origin
  std::optional<Vec3> predicted_zmp;
  VecX q, v, qdd, tau;
  VecX normal_forces;           // per end-effector frame
};

struct RunResult {
  std::vector<TickRecord> ticks;
  std::vector<ImpactCheck> impacts;
  bool completed = false;
  SolveStatus failure = SolveStatus::Optimal;
  std::string failure_reason;
  int infeasible_after_activation = 0;
  int fallback_events = 0;
  int longest_fallback_run = 0;
  double wall_time = 0.0;

  double worst_violation() const {
    double v = -kInf;
    for (const auto& i : impacts) v = std::max(v, i.worst_violation());
    return v;
  }

  bool post_impact_violation(double tol = 1e-3) const { return worst_violation() > tol; }

  /// Largest approach speed over all recorded impacts (0 without impacts).
  double contact_velocity() const {
    double v = 0.0;
    for (const auto& i : impacts) v = std::max(v, -i.event.pre_normal_velocity);
    return v;
  }
};

namespace detail {

inline std::string frame_list(const RobotModel& model, const std::vector<int>& frames) {
  std::string s;
  for (int f : frames) s += (s.empty() ? "" : "+") + model.frame(f).name;
  return s;
}

}  // namespace detail

inline RunResult run_closed_loop(const Scenario& sc) {
  sc.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  const RobotModel& model = sc.model;
  const int n = model.num_actuated();

  const std::vector<int> feet = sc.frames_with_role(EndEffectorRole::Established);
  const std::vector<int> strikers = sc.frames_with_role(EndEffectorRole::Impacting);
  const std::vector<int> idle = sc.frames_with_role(EndEffectorRole::Free);

  SimState sim{sc.initial, 0.0, {}};
  const FramePoses poses0 = forward_kinematics(model, sc.initial.q);
  for (int f : feet) sim.contacts.push_back({f, poses0.frames[f].p, -1});

  // Hull of the feet around their centroid.
  std::optional<ZmpPolygon> zmp_polygon;
  Vec3 origin = Vec3::Zero();
  if (sc.zmp_support_polygon) {
    std::vector<Vec3> pts;
    for (int f : feet) {
      pts.push_back(poses0.frames[f].p);
      origin += pts.back();
    }
    origin /= static_cast<double>(pts.size());
    zmp_polygon = ZmpPolygon::support_polygon(pts, origin, sc.foot_contact.normal);
    zmp_polygon->validate();
  }

  std::map<int, Vec3> home;  // initial positions of the moving end-effectors
  for (int f : strikers) home[f] = poses0.frames[f].p;
  for (int f : idle) home[f] = poses0.frames[f].p;
  VecX posture_ref(n);
  for (int j = 0; j < n; ++j) posture_ref(j) = sc.initial.q(model.actuated_q_index(j));

  PhaseMachine fsm = sc.fsm;
  std::map<int, bool> touched;  // impact detected per striker
  std::map<int, double> force_reference;
  std::map<int, Vec3> measured;  // latest measured force per frame
  std::optional<Vec3> last_predicted_zmp;
  VecX last_predicted_dqdot;
  bool last_aware = false;
  int fallback_run = 0;
  bool activated = false;

  RunResult result;
  const int substeps = static_cast<int>(std::lround(sc.control_period / sc.world.step));
  const int ticks = static_cast<int>(std::ceil(sc.duration / sc.control_period - 1e-9));

  for (int tick = 0; tick < ticks; ++tick) {
    const double t = sim.time;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    if (elapsed > sc.max_wall_time) {
      throw BudgetError("scenario '" + sc.name + "' exceeded its wall-clock budget");
    }

    // Phase logic; strikers count as detected once their force passes the
    // threshold.
    double weakest = kInf;
    for (int f : strikers) {
      const double fn = measured.count(f)
          ? sc.world.surfaces[sc.target_surface(f)].normal.dot(measured[f]) : 0.0;
      if (fsm.phase == Phase::Impact && fn > fsm.detection_threshold) touched[f] = true;
      weakest = std::min(weakest, touched[f] ? kInf : fn);
    }
    if (strikers.empty()) weakest = 0.0;
    const Phase before = fsm.phase;
    fsm.update(t, weakest);
    if (before == Phase::Admittance && fsm.phase == Phase::Detach) {
      for (int f : strikers) release(sim, f);
    }
    if (fsm.phase == Phase::Done) break;

    // Partition for this tick.
    EndEffectorPartition part;
    part.established = feet;
    std::vector<ContactSpec> specs(feet.size(), sc.foot_contact);
    std::vector<ImpactConfig> configs;
    for (int f : strikers) {
      const bool in_contact = sim.contact_index(f).has_value();
      if (in_contact) {
        part.established.push_back(f);
        const Surface& surf = sc.world.surfaces[sc.target_surface(f)];
        ContactSpec cs = sc.foot_contact;
        cs.normal = surf.normal;
        cs.friction = surf.friction;
        specs.push_back(cs);
      } else if (!in_contact && (fsm.phase == Phase::Start || fsm.phase == Phase::Impact)) {
        part.impacting.push_back(f);
        const Surface& surf = sc.world.surfaces[sc.target_surface(f)];
        configs.push_back({surf.restitution, surf.normal, sc.impact_duration, sc.control_period});
      } else if (!in_contact) {
        part.free.push_back(f);
      }
    }
    for (int f : idle) part.free.push_back(f);

    const Kinematics kin = compute_kinematics(model, sim.robot);
    bool armed = false;
    double distance = kInf, normal_velocity = 0.0;
    for (int f : part.impacting) {
      const Surface& surf = sc.world.surfaces[sc.target_surface(f)];
      const double d = surf.signed_distance(frame_position(model, kin, f));
      if (d < distance) {
        distance = d;
        normal_velocity = -surf.normal.dot(point_jacobian(model, kin, f) * sim.robot.v);
      }
      if (fsm.phase == Phase::Impact && d <= sc.activation_distance) activated = true;
    }
    // Engaged once near the surface; released by impact detection.
    armed = activated && fsm.phase == Phase::Impact && !part.impacting.empty();

    ControllerSettings settings;
    settings.mode = sc.mode;
    settings.control_period = sc.control_period;
    settings.impacts = configs;
    settings.contacts = specs;
    settings.bounds = sc.bounds;
    settings.zmp = zmp_polygon;
    settings.zmp_origin = origin;
    settings.com_velocity = sc.com_velocity;
    const VariableLayout layout = make_layout(model, specs);

    // Tasks.
    const TaskGains& g = sc.gains;
    std::vector<TaskObjective> tasks;
    const double kp = g.position_stiffness, kd = 2.0 * std::sqrt(kp);
    const auto hold = [&](int f, const Vec3& target, double weight) {
      const Vec3 x = frame_position(model, kin, f);
      const Vec3 xd = point_jacobian(model, kin, f) * sim.robot.v;
      tasks.push_back(end_effector_acceleration_task(model, sim.robot, f,
                                                     kp * (target - x) - kd * xd, weight));
    };
    for (int f : strikers) {
      if (sim.contact_index(f)) continue;
      const Vec3 n_s = sc.world.surfaces[sc.target_surface(f)].normal;
      const Vec3 x = frame_position(model, kin, f);
      const Vec3 xd = point_jacobian(model, kin, f) * sim.robot.v;
      const Mat3 tangent = Mat3::Identity() - n_s * n_s.transpose();
      if (fsm.phase == Phase::Impact || fsm.phase == Phase::Detach) {
        const double speed = fsm.phase == Phase::Impact ? -g.reference_velocity : g.detach_velocity;
        const Vec3 acc = g.velocity_gain * (speed * n_s - n_s * n_s.dot(xd)) +
                         tangent * (kp * (home[f] - x) - kd * xd);
        tasks.push_back(end_effector_acceleration_task(model, sim.robot, f, acc, g.reach_weight));
      } else {
        hold(f, home[f], g.hold_weight);
      }
    }
    for (int f : idle) hold(f, home[f], g.hold_weight);
    tasks.push_back(posture_task(model, sim.robot, posture_ref, g.posture_stiffness,
                                 g.posture_weight));
    if (layout.num_generators() > 0) {
      tasks.push_back(force_regularization_task(layout, g.force_regularization));
    }
    const std::vector<Mat3X> generators = contact_generators(specs);
    for (std::size_t k = feet.size(); k < part.established.size(); ++k) {
      const int f = part.established[k];
      if (!force_reference.count(f)) force_reference[f] = fsm.admittance_setpoint;
      const double fn = specs[k].normal.dot(measured.count(f) ? measured[f] : Vec3::Zero());
      force_reference[f] += fsm.admittance_gain * (fsm.admittance_setpoint - fn) * sc.control_period;
      tasks.push_back(contact_force_task(layout, static_cast<int>(k), generators[k],
                                         specs[k].normal, force_reference[f], g.force_weight));
    }

    Measurements meas;
    meas.contact_forces = VecX::Zero(3 * part.m1());
    for (int k = 0; k < part.m1(); ++k) {
      const int f = part.established[k];
      if (measured.count(f)) meas.contact_forces.segment<3>(3 * k) = measured[f];
    }

    const ControllerOutput out = controller_step(model, sim.robot, part, settings, meas, tasks, armed);

    TickRecord rec;
    rec.time = t;
    rec.phase = fsm.phase;
    rec.status = out.solution.status;
    rec.aware = out.aware_active;
    rec.fallback = out.fallback;
    rec.slack = out.slack;
    rec.iterations = out.solution.iterations;
    rec.objective = out.solution.objective;
    rec.distance = distance;
    rec.normal_velocity = normal_velocity;
    rec.q = sim.robot.q;
    rec.v = sim.robot.v;
    if (zmp_polygon) {
      std::vector<Vec3> pts;
      VecX f(3 * part.m1());
      for (int k = 0; k < part.m1(); ++k) {
        pts.push_back(frame_position(model, kin, part.established[k]));
        f.segment<3>(3 * k) = meas.contact_forces.segment<3>(3 * k);
      }
      const Vec6 W = net_wrench(pts, f, origin);
      if (std::abs(zmp_polygon->normal.dot(W.head<3>())) >= kMinZmpNormalForce) {
        rec.zmp = zmp(W, zmp_polygon->normal);
      }
    }
    rec.normal_forces = VecX::Zero(model.num_frames());
    for (const auto& [f, force] : measured) {
      const Vec3 nf = sim.contact_index(f) && sim.contacts[*sim.contact_index(f)].surface >= 0
          ? sc.world.surfaces[sim.contacts[*sim.contact_index(f)].surface].normal
          : sc.foot_contact.normal;
      rec.normal_forces(f) = nf.dot(force);
    }

    if (!out.solution.optimal()) {
      rec.q = sim.robot.q;
      result.ticks.push_back(rec);
      result.failure = out.solution.status;
      result.failure_reason = std::string("QP ") + to_string(out.solution.status) + " at t=" +
                              std::to_string(t) + " (phase " + to_string(fsm.phase) + ")";
      if (activated) ++result.infeasible_after_activation;
      break;
    }
    if (out.fallback) {
      ++result.fallback_events;
      ++fallback_run;
      result.longest_fallback_run = std::max(result.longest_fallback_run, fallback_run);
    } else {
      fallback_run = 0;
    }
    rec.qdd = out.qdd;
    rec.tau = out.torques;
    if (out.predicted) {
      rec.predicted_zmp = out.predicted->zmp;
      last_predicted_zmp = out.predicted->zmp;
      last_predicted_dqdot = out.predicted->joint_velocity;
    }
    last_aware = out.aware_active;
    result.ticks.push_back(std::move(rec));

    // Zero-order hold over the integration substeps. A force sensor reports
    // the impulsive force of an impact on the tick it happens.
    std::map<int, Vec3> spikes;
    for (int s = 0; s < substeps; ++s) {
      AdvanceOutput adv = advance(model, sc.world, sim, out.torques, sc.impact_duration);
      for (const ImpactRecord& imp : adv.impacts) {
        const ImpactResolution& res = imp.resolution;
        const Kinematics kpre = compute_kinematics(model, imp.pre_impact.robot);
        const MatX Je = stacked_jacobian(model, kpre, res.frames);
        const VecX tau_imp = Je.transpose() * res.impulses / sc.impact_duration;
        const VecX vpost = imp.pre_impact.robot.v + res.joint_velocity_jump;
        for (const ImpactEvent& e : res.events) {
          ImpactCheck chk;
          chk.event = e;
          chk.phase = fsm.phase;
          chk.aware_at_impact = last_aware;
          chk.joint_velocity_violation = -kInf;
          chk.impulsive_torque_violation = -kInf;
          for (int j = 0; j < n; ++j) {
            const int vi = model.actuated_offset() + j;
            chk.joint_velocity_violation = std::max(
                {chk.joint_velocity_violation, vpost(vi) - sc.bounds.v_upper(j),
                 sc.bounds.v_lower(j) - vpost(vi)});
            chk.impulsive_torque_violation = std::max(
                {chk.impulsive_torque_violation, tau_imp(vi) - sc.bounds.impulse_upper(j),
                 sc.bounds.impulse_lower(j) - tau_imp(vi)});
          }
          if (zmp_polygon) {
            // Pre-impact measured wrench of the sticking contacts plus the
            // simulated impulsive force jumps of every contact.
            std::vector<Vec3> pts;
            VecX f = VecX::Zero(3 * static_cast<Eigen::Index>(res.frames.size()));
            for (std::size_t k = 0; k < res.frames.size(); ++k) {
              pts.push_back(frame_position(model, kpre, res.frames[k]));
              if (k < imp.pre_impact.contacts.size()) {
                f.segment<3>(3 * k) = imp.pre_impact_forces.segment<3>(3 * k);
              }
            }
            f += res.impulses / sc.impact_duration;
            const Vec6 W = net_wrench(pts, f, origin);
            if (std::abs(zmp_polygon->normal.dot(W.head<3>())) >= kMinZmpNormalForce) {
              chk.zmp = zmp(W, zmp_polygon->normal);
              chk.zmp_violation = zmp_polygon->violation(*chk.zmp);
            } else {
              chk.zmp_violation = kInf;
            }
          }
          chk.predicted_zmp = last_predicted_zmp;
          if (last_predicted_dqdot.size() == res.joint_velocity_jump.size()) {
            chk.joint_velocity_prediction_error =
                (last_predicted_dqdot - res.joint_velocity_jump).lpNorm<Eigen::Infinity>();
          }
          result.impacts.push_back(chk);
          spikes[e.frame] = e.force_jump;
        }
      }
      sim = std::move(adv.state);
      measured.clear();
      for (std::size_t k = 0; k < sim.contacts.size(); ++k) {
        measured[sim.contacts[k].frame] = adv.forces.segment<3>(3 * k);
      }
    }
    for (const auto& [f, force] : spikes) measured[f] = force;
  }
  result.completed = result.failure == SolveStatus::Optimal;
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return result;
}

// ---------------------------------------------------------------------------
// CSV output

inline constexpr const char* kRunLogSchema = "impact_qp.run.v1";
inline constexpr const char* kImpactLogSchema = "impact_qp.impacts.v1";

inline void write_run_csv(std::ostream& out, const Scenario& sc, const RunResult& r) {
  const RobotModel& m = sc.model;
  out << "# schema=" << kRunLogSchema << '\n';
  out << "time,phase,status,aware,fallback,slack,iterations,objective,distance,"
         "normal_velocity,zmp_x,zmp_y,predicted_zmp_x,predicted_zmp_y";
  for (int i = 0; i < m.nq(); ++i) out << ",q" << i;
  for (int i = 0; i < m.nv(); ++i) out << ",v" << i;
  for (int i = 0; i < m.nv(); ++i) out << ",qdd" << i;
  for (int i = 0; i < m.num_actuated(); ++i) out << ",tau" << i;
  for (int f = 0; f < m.num_frames(); ++f) out << ",fn_" << m.frame(f).name;
  out << '\n' << std::setprecision(10);
  const auto opt = [&out](const std::optional<Vec3>& z, int i) {
    out << ',';
    if (z) out << (*z)(i);
  };
  const auto vec = [&out](const VecX& v, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out << ',';
      if (i < v.size()) out << v(i);
    }
  };
  for (const auto& t : r.ticks) {
    out << t.time << ',' << to_string(t.phase) << ',' << to_string(t.status) << ','
        << t.aware << ',' << t.fallback << ',' << t.slack << ',' << t.iterations << ','
        << t.objective << ',' << (std::isfinite(t.distance) ? t.distance : -1.0) << ','
        << t.normal_velocity;
    opt(t.zmp, 0);
    opt(t.zmp, 1);
    opt(t.predicted_zmp, 0);
    opt(t.predicted_zmp, 1);
    vec(t.q, m.nq());
    vec(t.v, m.nv());
    vec(t.qdd, m.nv());
    vec(t.tau, m.num_actuated());
    vec(t.normal_forces, m.num_frames());
    out << '\n';
  }
}

inline void write_impacts_csv(std::ostream& out, const Scenario& sc, const RunResult& r) {
  out << "# schema=" << kImpactLogSchema << '\n';
  out << "time,frame,phase,aware,pre_normal_velocity,post_normal_velocity,impulse_x,"
         "impulse_y,impulse_z,force_jump_normal,joint_velocity_violation,"
         "impulsive_torque_violation,zmp_x,zmp_y,zmp_violation,predicted_zmp_x,"
         "predicted_zmp_y,dqdot_prediction_error\n";
  out << std::setprecision(10);
  for (const auto& i : r.impacts) {
    const Vec3 n = sc.world.surfaces[i.event.surface].normal;
    out << i.event.time << ',' << sc.model.frame(i.event.frame).name << ','
        << to_string(i.phase) << ',' << i.aware_at_impact << ',' << i.event.pre_normal_velocity
        << ',' << i.event.post_normal_velocity << ',' << i.event.impulse.x() << ','
        << i.event.impulse.y() << ',' << i.event.impulse.z() << ','
        << n.dot(i.event.force_jump) << ',' << i.joint_velocity_violation << ','
        << i.impulsive_torque_violation << ',';
    if (i.zmp) out << i.zmp->x() << ',' << i.zmp->y() << ',' << i.zmp_violation;
    else out << ",,";
    out << ',';
    if (i.predicted_zmp) out << i.predicted_zmp->x() << ',' << i.predicted_zmp->y();
    else out << ',';
    out << ',' << i.joint_velocity_prediction_error << '\n';
  }
}

}  // namespace impact_qp
