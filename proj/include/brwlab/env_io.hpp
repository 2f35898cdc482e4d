#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "brwlab/env.hpp"
#include "brwlab/errors.hpp"

namespace brwlab {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
  if (!j.is_object()) fail(errc::bad_config, where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) fail(errc::bad_config, where + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

/// Environment configuration schema:
/// { "lattice_step": step,
///   "states": [ { "prob": p,
///                 "outcomes": [ { "prob": q, "children": [indices] } ],
///                 "tail": { "family": id, "alpha": a, "gamma": g,
///                           "k_min": k, "weight": w }?  } ] }
/// Unknown keys are rejected at every level.
inline EnvironmentLaw environment_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, {"lattice_step", "states"}, "environment");
  if (!j.contains("lattice_step") || !j.contains("states"))
    fail(errc::bad_config, "environment: lattice_step and states are required");
  EnvironmentLaw env;
  env.lattice_step = j.at("lattice_step").get<double>();
  if (!(env.lattice_step > 0.0)) fail(errc::bad_config, "environment: lattice_step must be > 0");
  for (const auto& js : j.at("states")) {
    detail::reject_unknown_keys(js, {"prob", "outcomes", "tail"}, "state");
    if (!js.contains("prob") || !js.contains("outcomes"))
      fail(errc::bad_config, "state: prob and outcomes are required");
    PointProcessLaw law;
    law.lattice_step = env.lattice_step;
    for (const auto& jo : js.at("outcomes")) {
      detail::reject_unknown_keys(jo, {"prob", "children"}, "outcome");
      if (!jo.contains("prob") || !jo.contains("children"))
        fail(errc::bad_config, "outcome: prob and children are required");
      Outcome o;
      o.prob = jo.at("prob").get<double>();
      for (const auto& c : jo.at("children")) o.children.push_back(c.get<std::int64_t>());
      law.outcomes.push_back(std::move(o));
    }
    if (js.contains("tail")) {
      const auto& jt = js.at("tail");
      detail::reject_unknown_keys(jt, {"family", "alpha", "gamma", "k_min", "weight"}, "tail");
      TailFamily tf;
      if (jt.contains("family")) tf.family = jt.at("family").get<std::string>();
      if (jt.contains("alpha")) tf.alpha = jt.at("alpha").get<double>();
      if (jt.contains("gamma")) tf.gamma = jt.at("gamma").get<double>();
      if (jt.contains("k_min")) tf.k_min = jt.at("k_min").get<std::int64_t>();
      if (jt.contains("weight")) tf.weight = jt.at("weight").get<double>();
      detail::require_supported_tail(tf);
      law.tail = tf;
    }
    env.states.emplace_back(js.at("prob").get<double>(), std::move(law));
  }
  validate_environment(env, 1e-10);
  return env;
}

inline nlohmann::json environment_to_json(const EnvironmentLaw& env) {
  nlohmann::json j;
  j["lattice_step"] = env.lattice_step;
  j["states"] = nlohmann::json::array();
  for (const auto& [p, state] : env.states) {
    nlohmann::json js;
    js["prob"] = p;
    js["outcomes"] = nlohmann::json::array();
    for (const auto& o : state.outcomes) {
      nlohmann::json jo;
      jo["prob"] = o.prob;
      jo["children"] = o.children;
      js["outcomes"].push_back(jo);
    }
    if (state.tail) {
      js["tail"] = {{"family", state.tail->family},
                    {"alpha", state.tail->alpha},
                    {"gamma", state.tail->gamma},
                    {"k_min", state.tail->k_min},
                    {"weight", state.tail->weight}};
    }
    j["states"].push_back(js);
  }
  return j;
}

inline EnvironmentLaw load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::bad_config, "cannot open environment file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::bad_config, "environment file " + path + ": " + e.what());
  }
  return environment_from_json(j);
}

inline void save_environment(const EnvironmentLaw& env, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(errc::bad_config, "cannot write environment file: " + path);
  out << environment_to_json(env).dump(2) << "\n";
}

}  // namespace brwlab
