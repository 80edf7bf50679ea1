// Copyright 2026 AudioLog Authors
// Single structured run configuration: one JSON file, strict validation,
// command-line overrides applied on top.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "audiolog/error.hpp"
#include "audiolog/features.hpp"
#include "audiolog/llm.hpp"
#include "audiolog/model.hpp"
#include "audiolog/pipeline.hpp"
#include "audiolog/training.hpp"
#include "json.hpp"

namespace audiolog {

struct DataConfig {
  std::string audio_root;
  std::string annotations;
  std::string scene_map;
  std::string event_vocab;
  std::string scene_vocab;
  // optional held-out validation set; training validates on the train set
  // when these are empty
  std::string val_annotations;
  std::string val_scene_map;
};

struct RunConfig {
  StftConfig features;
  ModelConfig model;  // num_events / num_scenes come from the vocabularies
  TrainConfig training;
  PostprocessConfig postprocess;
  ProviderConfig provider;
  DataConfig data;
};

namespace runconfig_detail {

inline void reject_unknown(const nlohmann::json& obj,
                           const std::set<std::string>& known,
                           const std::string& section) {
  if (!obj.is_object())
    throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items())
    if (known.find(key) == known.end())
      throw ConfigError("config: unknown key '" + section + "." + key + "'");
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& into,
          const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: bad value for '" + section + "." + key + "'");
  }
}

}  // namespace runconfig_detail

inline RunConfig load_run_config(const std::string& path) {
  using runconfig_detail::read;
  using runconfig_detail::reject_unknown;

  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  reject_unknown(j, {"features", "model", "training", "postprocess",
                     "provider", "data"},
                 "<root>");

  RunConfig cfg;
  if (j.contains("features")) {
    const auto& f = j["features"];
    reject_unknown(f, {"sample_rate", "window_size", "hop_length", "n_mels",
                       "log_floor"},
                   "features");
    read(f, "sample_rate", cfg.features.sample_rate, "features");
    read(f, "window_size", cfg.features.window_size, "features");
    read(f, "hop_length", cfg.features.hop_length, "features");
    read(f, "n_mels", cfg.features.n_mels, "features");
    read(f, "log_floor", cfg.features.log_floor, "features");
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, {"patch_size", "dim", "depths", "window", "heads",
                       "dropout", "mlp_ratio", "sed_kernel"},
                   "model");
    read(m, "patch_size", cfg.model.patch_size, "model");
    read(m, "dim", cfg.model.dim, "model");
    read(m, "depths", cfg.model.depths, "model");
    read(m, "window", cfg.model.window, "model");
    read(m, "heads", cfg.model.heads, "model");
    read(m, "dropout", cfg.model.dropout, "model");
    read(m, "mlp_ratio", cfg.model.mlp_ratio, "model");
    read(m, "sed_kernel", cfg.model.sed_kernel, "model");
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    reject_unknown(t, {"learning_rate", "batch_size", "epochs", "weight_decay",
                       "seed", "alpha", "checkpoint_dir",
                       "early_stop_patience", "val_every", "freeze_prefixes"},
                   "training");
    read(t, "learning_rate", cfg.training.learning_rate, "training");
    read(t, "batch_size", cfg.training.batch_size, "training");
    read(t, "epochs", cfg.training.epochs, "training");
    read(t, "weight_decay", cfg.training.weight_decay, "training");
    read(t, "seed", cfg.training.seed, "training");
    read(t, "alpha", cfg.training.alpha, "training");
    read(t, "checkpoint_dir", cfg.training.checkpoint_dir, "training");
    read(t, "early_stop_patience", cfg.training.early_stop_patience,
         "training");
    read(t, "val_every", cfg.training.val_every, "training");
    read(t, "freeze_prefixes", cfg.training.freeze_prefixes, "training");
  }
  if (j.contains("postprocess")) {
    const auto& p = j["postprocess"];
    reject_unknown(p, {"threshold", "median_window", "segment_len_s",
                       "segment_hop_s", "scene_majority_width"},
                   "postprocess");
    read(p, "threshold", cfg.postprocess.threshold, "postprocess");
    read(p, "median_window", cfg.postprocess.median_window, "postprocess");
    read(p, "segment_len_s", cfg.postprocess.segment_len_s, "postprocess");
    read(p, "segment_hop_s", cfg.postprocess.segment_hop_s, "postprocess");
    read(p, "scene_majority_width", cfg.postprocess.scene_majority_width,
         "postprocess");
  }
  if (j.contains("provider")) {
    const auto& p = j["provider"];
    reject_unknown(p, {"provider_id", "endpoint", "auth_env", "model_name",
                       "timeout_s", "max_retries", "backoff_ms"},
                   "provider");
    read(p, "provider_id", cfg.provider.provider_id, "provider");
    read(p, "endpoint", cfg.provider.endpoint, "provider");
    read(p, "auth_env", cfg.provider.auth_env, "provider");
    read(p, "model_name", cfg.provider.model_name, "provider");
    read(p, "timeout_s", cfg.provider.timeout_s, "provider");
    read(p, "max_retries", cfg.provider.max_retries, "provider");
    read(p, "backoff_ms", cfg.provider.backoff_ms, "provider");
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, {"audio_root", "annotations", "scene_map", "event_vocab",
                       "scene_vocab", "val_annotations", "val_scene_map"},
                   "data");
    read(d, "audio_root", cfg.data.audio_root, "data");
    read(d, "annotations", cfg.data.annotations, "data");
    read(d, "scene_map", cfg.data.scene_map, "data");
    read(d, "event_vocab", cfg.data.event_vocab, "data");
    read(d, "scene_vocab", cfg.data.scene_vocab, "data");
    read(d, "val_annotations", cfg.data.val_annotations, "data");
    read(d, "val_scene_map", cfg.data.val_scene_map, "data");
  }

  cfg.features.validate();
  cfg.postprocess.validate();
  cfg.training.validate();
  cfg.provider.validate();
  return cfg;
}

inline void write_run_config(const std::string& path, const RunConfig& cfg) {
  nlohmann::json j = {
      {"features",
       {{"sample_rate", cfg.features.sample_rate},
        {"window_size", cfg.features.window_size},
        {"hop_length", cfg.features.hop_length},
        {"n_mels", cfg.features.n_mels},
        {"log_floor", cfg.features.log_floor}}},
      {"model",
       {{"patch_size", cfg.model.patch_size},
        {"dim", cfg.model.dim},
        {"depths", cfg.model.depths},
        {"window", cfg.model.window},
        {"heads", cfg.model.heads},
        {"dropout", cfg.model.dropout},
        {"mlp_ratio", cfg.model.mlp_ratio},
        {"sed_kernel", cfg.model.sed_kernel}}},
      {"training",
       {{"learning_rate", cfg.training.learning_rate},
        {"batch_size", cfg.training.batch_size},
        {"epochs", cfg.training.epochs},
        {"weight_decay", cfg.training.weight_decay},
        {"seed", cfg.training.seed},
        {"alpha", cfg.training.alpha},
        {"checkpoint_dir", cfg.training.checkpoint_dir},
        {"early_stop_patience", cfg.training.early_stop_patience},
        {"val_every", cfg.training.val_every},
        {"freeze_prefixes", cfg.training.freeze_prefixes}}},
      {"postprocess",
       {{"threshold", cfg.postprocess.threshold},
        {"median_window", cfg.postprocess.median_window},
        {"segment_len_s", cfg.postprocess.segment_len_s},
        {"segment_hop_s", cfg.postprocess.segment_hop_s},
        {"scene_majority_width", cfg.postprocess.scene_majority_width}}},
      {"provider",
       {{"provider_id", cfg.provider.provider_id},
        {"endpoint", cfg.provider.endpoint},
        {"auth_env", cfg.provider.auth_env},
        {"model_name", cfg.provider.model_name},
        {"timeout_s", cfg.provider.timeout_s},
        {"max_retries", cfg.provider.max_retries},
        {"backoff_ms", cfg.provider.backoff_ms}}},
      {"data",
       {{"audio_root", cfg.data.audio_root},
        {"annotations", cfg.data.annotations},
        {"scene_map", cfg.data.scene_map},
        {"event_vocab", cfg.data.event_vocab},
        {"scene_vocab", cfg.data.scene_vocab},
        {"val_annotations", cfg.data.val_annotations},
        {"val_scene_map", cfg.data.val_scene_map}}}};
  std::ofstream os(path);
  if (!os) throw ConfigError("config: cannot write " + path);
  os << j.dump(2) << "\n";
}

}  // namespace audiolog
