#pragma once

// JSON robot descriptions.
//
//   {
//     "gravity": [0, 0, -9.81],                       (optional)
//     "links":  [{"name", "mass", "com": [3],
//                 "inertia": [ixx, ixy, ixz, iyy, iyz, izz]}],
//     "joints": [{"name", "kind": "revolute"|"prismatic"|"free-flyer",
//                 "parent": "<link>"|"world", "child": "<link>",
//                 "axis": [3], "origin": {"xyz": [3], "quat": [w, x, y, z]}}],
//     "end_effectors": [{"name", "body", "transform": {"xyz", "quat"},
//                        "role": "established"|"impacting"|"free"}]
//   }
//
// SI units throughout. Joints may be listed in any order; they are sorted
// so that parents precede children.

#include "impact_qp/model.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace impact_qp {

/// Malformed description files (bad JSON, missing fields, unknown names).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io {

using nlohmann::json;

inline Vec3 vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(std::string(what) + ": expected a 3-vector");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline VecX vecx(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": expected an array");
  VecX v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = j[i].is_null()
        ? std::numeric_limits<double>::quiet_NaN()
        : j[i].get<double>();
  }
  return v;
}

inline Transform transform(const json& j) {
  Transform t;
  if (j.is_null()) return t;
  if (j.contains("xyz")) t.p = vec3(j.at("xyz"), "xyz");
  if (j.contains("quat")) {
    const json& q = j.at("quat");
    if (!q.is_array() || q.size() != 4) throw ParseError("quat: expected [w, x, y, z]");
    const Quat quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                    q[3].get<double>());
    if (std::abs(quat.norm() - 1.0) > 1e-9) throw ParseError("quat: not unit norm");
    t.R = quat.toRotationMatrix();
  }
  return t;
}

inline JointKind joint_kind(const std::string& s) {
  if (s == "revolute") return JointKind::Revolute;
  if (s == "prismatic") return JointKind::Prismatic;
  if (s == "free-flyer" || s == "free_flyer" || s == "floating") return JointKind::FreeFlyer;
  throw ParseError("unknown joint kind '" + s + "'");
}

inline EndEffectorRole role(const std::string& s) {
  if (s == "established") return EndEffectorRole::Established;
  if (s == "impacting") return EndEffectorRole::Impacting;
  if (s == "free") return EndEffectorRole::Free;
  throw ParseError("unknown end-effector role '" + s + "'");
}

}  // namespace io

inline RobotModel model_from_json(const nlohmann::json& doc) {
  using io::json;
  try {
    RobotModel model;
    if (doc.contains("gravity")) model.gravity = io::vec3(doc.at("gravity"), "gravity");

    std::map<std::string, Link> links;
    for (const json& jl : doc.at("links")) {
      Link l;
      l.name = jl.at("name").get<std::string>();
      l.mass = jl.at("mass").get<double>();
      if (jl.contains("com")) l.com = io::vec3(jl.at("com"), "com");
      const json& in = jl.at("inertia");
      if (!in.is_array() || in.size() != 6) {
        throw ParseError("link '" + l.name + "': inertia needs 6 entries");
      }
      l.inertia << in[0].get<double>(), in[1].get<double>(), in[2].get<double>(),
                   in[1].get<double>(), in[3].get<double>(), in[4].get<double>(),
                   in[2].get<double>(), in[4].get<double>(), in[5].get<double>();
      if (!links.emplace(l.name, l).second) {
        throw ParseError("duplicate link '" + l.name + "'");
      }
    }

    struct PendingJoint {
      Joint joint;
      std::string parent;
      std::string child;
    };
    std::vector<PendingJoint> pending;
    for (const json& jj : doc.at("joints")) {
      PendingJoint p;
      p.joint.name = jj.at("name").get<std::string>();
      p.joint.kind = io::joint_kind(jj.at("kind").get<std::string>());
      if (jj.contains("axis")) p.joint.axis = io::vec3(jj.at("axis"), "axis");
      if (jj.contains("origin")) p.joint.origin = io::transform(jj.at("origin"));
      p.parent = jj.at("parent").get<std::string>();
      p.child = jj.at("child").get<std::string>();
      if (!links.count(p.child)) throw ParseError("joint '" + p.joint.name + "': unknown child");
      pending.push_back(std::move(p));
    }
    if (pending.size() != links.size()) {
      throw ParseError("every link must be the child of exactly one joint");
    }

    std::map<std::string, int> index;
    while (!pending.empty()) {
      bool progressed = false;
      for (auto it = pending.begin(); it != pending.end();) {
        const bool parent_ready = it->parent == "world" || index.count(it->parent);
        if (!parent_ready) { ++it; continue; }
        Joint j = it->joint;
        j.parent = it->parent == "world" ? -1 : index.at(it->parent);
        if (index.count(it->child)) throw ParseError("link '" + it->child + "' has two parents");
        index[it->child] = model.add_body(links.at(it->child), j);
        it = pending.erase(it);
        progressed = true;
      }
      if (!progressed) throw ParseError("joint tree is cyclic or references unknown parents");
    }

    if (doc.contains("end_effectors")) {
      for (const json& je : doc.at("end_effectors")) {
        EndEffectorFrame f;
        f.name = je.at("name").get<std::string>();
        const auto body = je.at("body").get<std::string>();
        if (!index.count(body)) throw ParseError("end-effector '" + f.name + "': unknown body");
        f.body = index.at(body);
        if (je.contains("transform")) f.offset = io::transform(je.at("transform"));
        if (je.contains("role")) f.role = io::role(je.at("role").get<std::string>());
        model.add_frame(f);
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("robot description: ") + e.what());
  } catch (const DimensionError& e) {
    throw ParseError(std::string("robot description: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline RobotModel load_model(const std::string& path) {
  return model_from_json(read_json_file(path));
}

}  // namespace impact_qp
