#pragma once

#include <cstdlib>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "sysid/model_io.hpp"
#include "sysid/trainer.hpp"

namespace sysid {

/**
 * JSON run configuration with the identification toolkit's parameter names.
 * The schema is strict: unknown keys, wrong types and out-of-range values are
 * rejected before anything runs. Command-line flags may override single keys.
 */
struct RunConfig {
  std::string train_data, val_data, test_data;
  std::string output_dir = ".";
  std::size_t n = 0;

  bool input_output = true;
  bool autonomous = false;
  bool id_D = true;
  bool learn_x0 = false;

  bool stable_A = false;
  bool naive_A = false;
  bool LMI_A = false;
  std::optional<double> delta;
  std::optional<Matrix> mask_A, mask_B, mask_C, mask_D;
  double max_eigenvalue = 1.0;
  double epsilon = 1e-6;

  std::optional<Matrix> A_init, B_init, C_init, D_init;
  bool learn_A = true, learn_B = true, learn_C = true, learn_D = true;

  double dropout = 0.0;
  std::optional<std::size_t> horizon, horizon_val;
  std::size_t stride = 1, stride_val = 1;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 1000;
  double learning_rate = 1e-3;
  double grad_clip = 100.0;
  bool init_from_ls = false;
  std::size_t init_epochs = 2000;
  double init_learning_rate = 1e-3;
  double init_grad_clip = 0.1;
  std::string train_loss = "mse", val_loss = "mse", init_loss = "mse";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> patience;
};

namespace detail {

inline Matrix matrix_from_rows(const Json& j, const std::string& key) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError("key '" + key + "' must be a 2-D array of numbers");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ConfigError("key '" + key + "' must be rectangular");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ConfigError("key '" + key + "' must contain numbers");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

}  // namespace detail

inline RunConfig parse_run_config(const Json& j) {
  static const std::set<std::string> known = {
      "train_data",  "val_data",   "test_data",  "output_dir", "n",
      "input_output", "autonomous", "id_D",       "learn_x0",   "stable_A",
      "naive_A",     "LMI_A",      "delta",      "mask_A",     "mask_B",
      "mask_C",      "mask_D",     "max_eigenvalue", "epsilon",
      "A_init",      "B_init",     "C_init",     "D_init",
      "learn_A",     "learn_B",    "learn_C",    "learn_D",
      "dropout",     "horizon",    "stride",     "horizon_val", "stride_val",
      "batch_size",  "max_epochs", "learning_rate", "grad_clip",
      "init_from_ls", "init_epochs", "init_learning_rate", "init_grad_clip",
      "train_loss",  "val_loss",   "init_loss",  "seed",       "patience"};
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

  RunConfig c;
  auto get_bool = [&](const char* key, bool& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_boolean()) throw ConfigError(std::string("key '") + key + "' must be a bool");
    out = j.at(key).get<bool>();
  };
  auto get_count = [&](const char* key, std::size_t& out, std::size_t min_value = 0) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer() || j.at(key).get<long long>() < 0)
      throw ConfigError(std::string("key '") + key + "' must be a non-negative integer");
    out = j.at(key).get<std::size_t>();
    if (out < min_value)
      throw ConfigError(std::string("key '") + key + "' must be >= " + std::to_string(min_value));
  };
  auto get_real = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) throw ConfigError(std::string("key '") + key + "' must be a number");
    out = j.at(key).get<double>();
  };
  auto get_string = [&](const char* key, std::string& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_string()) throw ConfigError(std::string("key '") + key + "' must be a string");
    out = j.at(key).get<std::string>();
  };
  auto get_matrix = [&](const char* key, std::optional<Matrix>& out) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    out = detail::matrix_from_rows(j.at(key), key);
  };
  auto get_mask = [&](const char* key, std::optional<Matrix>& out) {
    get_matrix(key, out);
    if (out)
      for (std::size_t k = 0; k < out->size(); ++k)
        if ((*out)[k] != 0.0 && (*out)[k] != 1.0)
          throw ConfigError(std::string("key '") + key + "' must contain only 0 and 1 entries");
  };

  get_string("train_data", c.train_data);
  get_string("val_data", c.val_data);
  get_string("test_data", c.test_data);
  get_string("output_dir", c.output_dir);
  get_count("n", c.n, 1);
  get_bool("input_output", c.input_output);
  get_bool("autonomous", c.autonomous);
  get_bool("id_D", c.id_D);
  get_bool("learn_x0", c.learn_x0);
  get_bool("stable_A", c.stable_A);
  get_bool("naive_A", c.naive_A);
  get_bool("LMI_A", c.LMI_A);
  if (j.contains("delta") && !j.at("delta").is_null()) {
    if (!j.at("delta").is_number()) throw ConfigError("key 'delta' must be a number or null");
    c.delta = j.at("delta").get<double>();
    if (*c.delta <= 0) throw ConfigError("key 'delta' must be positive");
  }
  get_mask("mask_A", c.mask_A);
  get_mask("mask_B", c.mask_B);
  get_mask("mask_C", c.mask_C);
  get_mask("mask_D", c.mask_D);
  get_real("max_eigenvalue", c.max_eigenvalue);
  if (!(c.max_eigenvalue > 0 && c.max_eigenvalue <= 1))
    throw ConfigError("key 'max_eigenvalue' must lie in (0, 1]");
  get_real("epsilon", c.epsilon);
  if (!(c.epsilon > 0)) throw ConfigError("key 'epsilon' must be positive");
  get_matrix("A_init", c.A_init);
  get_matrix("B_init", c.B_init);
  get_matrix("C_init", c.C_init);
  get_matrix("D_init", c.D_init);
  get_bool("learn_A", c.learn_A);
  get_bool("learn_B", c.learn_B);
  get_bool("learn_C", c.learn_C);
  get_bool("learn_D", c.learn_D);
  get_real("dropout", c.dropout);
  if (!(c.dropout >= 0 && c.dropout < 1)) throw ConfigError("key 'dropout' must lie in [0, 1)");
  if (j.contains("horizon") && !j.at("horizon").is_null()) {
    std::size_t h = 0;
    get_count("horizon", h, 2);
    c.horizon = h;
  }
  if (j.contains("horizon_val") && !j.at("horizon_val").is_null()) {
    std::size_t h = 0;
    get_count("horizon_val", h, 2);
    c.horizon_val = h;
  }
  get_count("stride", c.stride, 1);
  get_count("stride_val", c.stride_val, 1);
  get_count("batch_size", c.batch_size, 1);
  get_count("max_epochs", c.max_epochs, 1);
  get_real("learning_rate", c.learning_rate);
  get_real("grad_clip", c.grad_clip);
  if (!(c.learning_rate > 0)) throw ConfigError("key 'learning_rate' must be positive");
  if (!(c.grad_clip > 0)) throw ConfigError("key 'grad_clip' must be positive");
  get_bool("init_from_ls", c.init_from_ls);
  get_count("init_epochs", c.init_epochs, 1);
  get_real("init_learning_rate", c.init_learning_rate);
  get_real("init_grad_clip", c.init_grad_clip);
  if (!(c.init_learning_rate > 0)) throw ConfigError("key 'init_learning_rate' must be positive");
  if (!(c.init_grad_clip > 0)) throw ConfigError("key 'init_grad_clip' must be positive");
  get_string("train_loss", c.train_loss);
  get_string("val_loss", c.val_loss);
  get_string("init_loss", c.init_loss);
  loss_kind_from_string(c.train_loss);
  loss_kind_from_string(c.val_loss);
  loss_kind_from_string(c.init_loss);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer()) throw ConfigError("key 'seed' must be an integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("patience") && !j.at("patience").is_null()) {
    std::size_t pt = 0;
    get_count("patience", pt, 1);
    c.patience = pt;
  }
  return c;
}

/// Flag logic: scaled when naive_A; with LMI_A, delta selects near-identity
/// and mask_A selects the sparse certificate, otherwise generic.
inline AMode resolve_a_mode(const RunConfig& c) {
  if (!c.stable_A) {
    if (c.naive_A || c.LMI_A)
      throw ConfigError("naive_A / LMI_A require stable_A = true");
    return AMode::free;
  }
  if (c.naive_A && c.LMI_A) throw ConfigError("naive_A and LMI_A are mutually exclusive");
  if (c.naive_A) return AMode::scaled;
  if (c.LMI_A) {
    if (c.delta && c.mask_A)
      throw ConfigError("LMI_A with both delta and mask_A is ambiguous; set one");
    if (c.delta) return AMode::near_identity;
    if (c.mask_A) return AMode::sparse_lmi;
    return AMode::generic;
  }
  throw ConfigError("stable_A = true requires naive_A or LMI_A");
}

/// Seed precedence: explicit config value, then STABLE_SYSID_SEED, then 0.
inline std::uint64_t resolve_seed(const RunConfig& c) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("STABLE_SYSID_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0') return static_cast<std::uint64_t>(v);
    throw ConfigError("STABLE_SYSID_SEED is not an integer");
  }
  return 0;
}

namespace detail {
inline void check_mask_shape(const std::optional<Matrix>& mask, std::size_t rows,
                             std::size_t cols, const char* name) {
  if (!mask) return;
  if (mask->rows() != rows || mask->cols() != cols)
    throw ConfigError(std::string(name) + " has shape " + mask->shape_str() + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  validate_mask(*mask, name);
}
}  // namespace detail

/// Instantiate the model a run config describes, given the data dimensions.
inline StateSpaceModel build_model(const RunConfig& c, std::size_t input_dim,
                                   std::size_t target_dim) {
  const std::size_t p = c.input_output ? target_dim : 0;
  if (!c.input_output && target_dim != c.n)
    throw ConfigError("input-state data has " + std::to_string(target_dim) +
                      " state columns but n = " + std::to_string(c.n));
  StateSpaceModel model(c.n, input_dim, p);
  model.input_output = c.input_output;
  model.autonomous = c.autonomous;
  model.id_D = c.id_D;
  model.learn_x0 = c.learn_x0;
  model.learn_A = c.learn_A;
  model.learn_B = c.learn_B;
  model.learn_C = c.learn_C;
  model.learn_D = c.learn_D;

  const AMode mode = resolve_a_mode(c);
  detail::check_mask_shape(c.mask_A, c.n, c.n, "mask_A");
  detail::check_mask_shape(c.mask_B, c.n, input_dim, "mask_B");
  detail::check_mask_shape(c.mask_C, p, c.n, "mask_C");
  detail::check_mask_shape(c.mask_D, p, input_dim, "mask_D");
  if (mode == AMode::free) {
    if (c.mask_A) model.mask_A = *c.mask_A;
  } else {
    if (c.max_eigenvalue != 1.0 &&
        (mode == AMode::near_identity || mode == AMode::sparse_lmi))
      throw ConfigError("max_eigenvalue is only supported by the generic and scaled modes");
    Matrix mask = c.mask_A ? *c.mask_A : Matrix();
    model.use_stable_parametrization(mode, c.max_eigenvalue, c.epsilon, c.delta.value_or(1.0),
                                     std::move(mask));
  }
  if (c.mask_B) model.mask_B = *c.mask_B;
  if (c.mask_C) model.mask_C = *c.mask_C;
  if (c.mask_D) model.mask_D = *c.mask_D;
  return model;
}

inline TrainConfig to_train_config(const RunConfig& c) {
  TrainConfig t;
  t.max_epochs = c.max_epochs;
  t.batch_size = c.batch_size;
  t.learning_rate = c.learning_rate;
  t.init_learning_rate = c.init_learning_rate;
  t.init_epochs = c.init_epochs;
  t.grad_clip = c.grad_clip;
  t.init_grad_clip = c.init_grad_clip;
  t.train_loss.kind = loss_kind_from_string(c.train_loss);
  t.train_loss.dropout_p = c.dropout;
  t.val_loss = loss_kind_from_string(c.val_loss);
  t.init_loss = loss_kind_from_string(c.init_loss);
  t.init_from_ls = c.init_from_ls;
  t.seed = resolve_seed(c);
  t.patience = c.patience;
  t.segmentation.horizon = c.horizon;
  t.segmentation.stride = c.stride;
  t.segmentation.horizon_val = c.horizon_val;
  t.segmentation.stride_val = c.stride_val;
  t.a_init = c.A_init;
  t.b_init = c.B_init;
  t.c_init = c.C_init;
  t.d_init = c.D_init;
  return t;
}

}  // namespace sysid
