#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "sysid/state_space.hpp"
#include "sysid/synth.hpp"

namespace sysid {

using Json = nlohmann::ordered_json;

inline Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.data();  // row-major
  return j;
}

inline Matrix matrix_from_json(const Json& j) {
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                std::move(data));
}

inline AMode a_mode_from_string(const std::string& s) {
  if (s == "free") return AMode::free;
  if (s == "generic") return AMode::generic;
  if (s == "near_identity") return AMode::near_identity;
  if (s == "sparse_lmi") return AMode::sparse_lmi;
  if (s == "scaled") return AMode::scaled;
  throw ConfigError("unknown A mode '" + s + "'");
}

/**
 * Model document: dimensions, flags, raw matrices with their masks, and the
 * free stable parameters when a parametrization is active, so a saved model
 * re-materializes identically. `A_effective` is derived output for human
 * consumption and ignored on load.
 */
inline Json model_to_json(const StateSpaceModel& model) {
  Json j;
  j["format"] = "stable-sysid-model";
  j["n"] = model.n;
  j["m"] = model.m;
  j["p"] = model.p;
  j["input_output"] = model.input_output;
  j["autonomous"] = model.autonomous;
  j["id_D"] = model.id_D;
  j["learn_x0"] = model.learn_x0;
  j["a_mode"] = to_string(model.a_mode);
  if (model.a_mode == AMode::free) {
    j["A"] = matrix_to_json(model.A.value);
    if (!model.mask_A.empty()) j["mask_A"] = matrix_to_json(model.mask_A);
  } else {
    Json s;
    s["gamma"] = model.stable.gamma;
    s["epsilon"] = model.stable.epsilon;
    s["delta"] = model.stable.delta;
    s["mask"] = matrix_to_json(model.stable.mask);
    s["W"] = matrix_to_json(model.stable.W.value);
    s["V"] = matrix_to_json(model.stable.V.value);
    s["eta"] = model.stable.eta.value(0, 0);
    j["stable"] = s;
  }
  j["B"] = matrix_to_json(model.B.value);
  j["C"] = matrix_to_json(model.C.value);
  j["D"] = matrix_to_json(model.D.value);
  if (!model.mask_B.empty()) j["mask_B"] = matrix_to_json(model.mask_B);
  if (!model.mask_C.empty()) j["mask_C"] = matrix_to_json(model.mask_C);
  if (!model.mask_D.empty()) j["mask_D"] = matrix_to_json(model.mask_D);
  j["A_effective"] = matrix_to_json(model.effective_A());
  return j;
}

inline StateSpaceModel model_from_json(const Json& j) {
  if (j.value("format", "") != std::string("stable-sysid-model"))
    throw ConfigError("model file: missing or wrong 'format' marker");
  StateSpaceModel model(j.at("n").get<std::size_t>(), j.at("m").get<std::size_t>(),
                        j.at("p").get<std::size_t>());
  model.input_output = j.at("input_output").get<bool>();
  model.autonomous = j.at("autonomous").get<bool>();
  model.id_D = j.at("id_D").get<bool>();
  model.learn_x0 = j.at("learn_x0").get<bool>();
  const AMode mode = a_mode_from_string(j.at("a_mode").get<std::string>());
  if (mode == AMode::free) {
    model.A.value = matrix_from_json(j.at("A"));
    if (j.contains("mask_A")) model.mask_A = matrix_from_json(j.at("mask_A"));
  } else {
    const Json& s = j.at("stable");
    model.use_stable_parametrization(mode, s.at("gamma").get<double>(),
                                     s.at("epsilon").get<double>(), s.at("delta").get<double>(),
                                     matrix_from_json(s.at("mask")));
    model.stable.W.value = matrix_from_json(s.at("W"));
    model.stable.V.value = matrix_from_json(s.at("V"));
    model.stable.eta.value(0, 0) = s.at("eta").get<double>();
  }
  model.B.value = matrix_from_json(j.at("B"));
  model.C.value = matrix_from_json(j.at("C"));
  model.D.value = matrix_from_json(j.at("D"));
  if (j.contains("mask_B")) model.mask_B = matrix_from_json(j.at("mask_B"));
  if (j.contains("mask_C")) model.mask_C = matrix_from_json(j.at("mask_C"));
  if (j.contains("mask_D")) model.mask_D = matrix_from_json(j.at("mask_D"));
  return model;
}

inline void save_model(const StateSpaceModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << model_to_json(model).dump(2) << "\n";
}

inline StateSpaceModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  Json j = Json::parse(in);
  return model_from_json(j);
}

inline Json system_to_json(const SystemMatrices& sys) {
  Json j;
  j["A"] = matrix_to_json(sys.A);
  j["B"] = matrix_to_json(sys.B);
  j["C"] = matrix_to_json(sys.C);
  j["D"] = matrix_to_json(sys.D);
  return j;
}

inline SystemMatrices system_from_json(const Json& j) {
  return SystemMatrices{matrix_from_json(j.at("A")), matrix_from_json(j.at("B")),
                        matrix_from_json(j.at("C")), matrix_from_json(j.at("D"))};
}

}  // namespace sysid
