#pragma once

// JSON run configuration:
//
//   {
//     "version": 1,
//     "model": { "window": 200, "backbone": {...}, "embed_dim": 32, ... },
//     "train": { "batch_size": 512, "lr_init": 1e-4, ... },
//     "data":  { "stride": 10, "eval_stride": 200, "split_seed": 0 }
//   }
//
// Every key is optional; missing keys keep their defaults. Unknown keys are
// rejected so typos surface as validation errors.

#include "ftin/model.hpp"
#include "ftin/training.hpp"

#include <json.hpp>

#include <set>

namespace ftin {

inline constexpr int kConfigVersion = 1;

struct DataConfig {
  Index stride = 10;        // training / validation window stride
  Index eval_stride = 0;    // reconstruction stride, 0 means the window length
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  FtinConfig model;
  TrainConfig train;
  DataConfig data;

  Index eval_stride() const { return data.eval_stride > 0 ? data.eval_stride : model.window; }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where);
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw SchemaError(where.empty() ? k : where + "." + k);
  }
}

template <class V>
void read_field(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(where + "." + key);
  }
}

}  // namespace detail

inline nlohmann::json to_json(const FtinConfig& c) {
  return {
      {"window", c.window},
      {"channels", c.channels},
      {"backbone",
       {{"channels", c.backbone.channels},
        {"strides", c.backbone.strides},
        {"kernel", c.backbone.kernel},
        {"blocks_per_stage", c.backbone.blocks_per_stage}}},
      {"embed_dim", c.embed_dim},
      {"n_freq_layers", c.n_freq_layers},
      {"fdl_enabled", c.fdl_enabled},
      {"tdl_enabled", c.tdl_enabled},
      {"slstm", {{"hidden", c.slstm.hidden}, {"layers", c.slstm.layers}}},
      {"head", c.head},
      {"activation", std::string(to_string(c.activation))},
      {"l_fre", c.l_fre},
  };
}

inline FtinConfig model_config_from_json(const nlohmann::json& j, FtinConfig c = {}) {
  detail::reject_unknown(j,
                         {"window", "channels", "backbone", "embed_dim", "n_freq_layers", "fdl_enabled", "tdl_enabled",
                          "slstm", "head", "activation", "l_fre"},
                         "model");
  detail::read_field(j, "window", c.window, "model");
  detail::read_field(j, "channels", c.channels, "model");
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    detail::reject_unknown(b, {"channels", "strides", "kernel", "blocks_per_stage"}, "model.backbone");
    detail::read_field(b, "channels", c.backbone.channels, "model.backbone");
    detail::read_field(b, "strides", c.backbone.strides, "model.backbone");
    detail::read_field(b, "kernel", c.backbone.kernel, "model.backbone");
    detail::read_field(b, "blocks_per_stage", c.backbone.blocks_per_stage, "model.backbone");
  }
  detail::read_field(j, "embed_dim", c.embed_dim, "model");
  detail::read_field(j, "n_freq_layers", c.n_freq_layers, "model");
  detail::read_field(j, "fdl_enabled", c.fdl_enabled, "model");
  detail::read_field(j, "tdl_enabled", c.tdl_enabled, "model");
  if (j.contains("slstm")) {
    const auto& s = j.at("slstm");
    detail::reject_unknown(s, {"hidden", "layers"}, "model.slstm");
    detail::read_field(s, "hidden", c.slstm.hidden, "model.slstm");
    detail::read_field(s, "layers", c.slstm.layers, "model.slstm");
  }
  detail::read_field(j, "head", c.head, "model");
  if (j.contains("activation")) {
    std::string a;
    detail::read_field(j, "activation", a, "model");
    try {
      c.activation = activation_from_string(a);
    } catch (const Error&) {
      throw SchemaError("model.activation");
    }
  }
  detail::read_field(j, "l_fre", c.l_fre, "model");
  validate(c);
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"batch_size", c.batch_size},
      {"max_epochs", c.max_epochs},
      {"lr_init", c.lr_init},
      {"lr_floor", c.lr_floor},
      {"plateau_patience", c.plateau_patience},
      {"lr_decay_factor", c.lr_decay_factor},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"seed", c.seed},
      {"threads", c.threads},
  };
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  detail::reject_unknown(j,
                         {"batch_size", "max_epochs", "lr_init", "lr_floor", "plateau_patience", "lr_decay_factor",
                          "beta1", "beta2", "adam_eps", "seed", "threads"},
                         "train");
  detail::read_field(j, "batch_size", c.batch_size, "train");
  detail::read_field(j, "max_epochs", c.max_epochs, "train");
  detail::read_field(j, "lr_init", c.lr_init, "train");
  detail::read_field(j, "lr_floor", c.lr_floor, "train");
  detail::read_field(j, "plateau_patience", c.plateau_patience, "train");
  detail::read_field(j, "lr_decay_factor", c.lr_decay_factor, "train");
  detail::read_field(j, "beta1", c.beta1, "train");
  detail::read_field(j, "beta2", c.beta2, "train");
  detail::read_field(j, "adam_eps", c.adam_eps, "train");
  detail::read_field(j, "seed", c.seed, "train");
  detail::read_field(j, "threads", c.threads, "train");
  validate(c);
  return c;
}

inline nlohmann::json to_json(const DataConfig& c) {
  return {{"stride", c.stride}, {"eval_stride", c.eval_stride}, {"split_seed", c.split_seed}};
}

inline DataConfig data_config_from_json(const nlohmann::json& j, DataConfig c = {}) {
  detail::reject_unknown(j, {"stride", "eval_stride", "split_seed"}, "data");
  detail::read_field(j, "stride", c.stride, "data");
  detail::read_field(j, "eval_stride", c.eval_stride, "data");
  detail::read_field(j, "split_seed", c.split_seed, "data");
  if (c.stride < 1) throw ValidationError("data config: stride must be >= 1");
  if (c.eval_stride < 0) throw ValidationError("data config: eval_stride must be >= 0");
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"version", kConfigVersion}, {"model", to_json(c.model)}, {"train", to_json(c.train)}, {"data", to_json(c.data)}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"version", "model", "train", "data"}, "");
  int version = kConfigVersion;
  detail::read_field(j, "version", version, "config");
  if (version != kConfigVersion) throw SchemaError("version");
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("data")) c.data = data_config_from_json(j.at("data"));
  validate(c.model);
  validate(c.train);
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace ftin
