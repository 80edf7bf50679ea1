// Copyright 2026 AudioLog Authors
// Checkpoint directory: config.json + params.tensors (named-tensor binary
// container) + norm_stats.json. Round-trips are bit-exact.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "audiolog/error.hpp"
#include "audiolog/features.hpp"
#include "audiolog/model.hpp"
#include "json.hpp"

namespace audiolog {

inline constexpr int kCheckpointSchemaVersion = 1;

// Everything needed to run inference: model, feature config, normalization
// statistics and the label vocabularies.
struct ModelBundle {
  ModelConfig model_cfg;
  StftConfig stft;
  NormStats stats;
  std::vector<std::string> scene_labels;
  std::vector<std::string> event_labels;
  AudioLogModel model;
};

namespace tensorio {

// Container layout (little-endian):
//   magic "ALTC0001" | u32 tensor count | per tensor:
//   u16 name length | name bytes | u8 rank | i64 dims... | f64 values...
inline constexpr char kMagic[8] = {'A', 'L', 'T', 'C', '0', '0', '0', '1'};

inline void save_tensors(const std::string& path,
                         const std::map<std::string, nn::Var>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UnreadableFile(path + ": cannot write tensor container");
  os.write(kMagic, 8);
  const auto count = static_cast<uint32_t>(params.size());
  os.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, var] : params) {
    const auto name_len = static_cast<uint16_t>(name.size());
    os.write(reinterpret_cast<const char*>(&name_len), 2);
    os.write(name.data(), name_len);
    const auto rank = static_cast<uint8_t>(var->value.rank());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int64_t d : var->value.shape)
      os.write(reinterpret_cast<const char*>(&d), 8);
    os.write(reinterpret_cast<const char*>(var->value.data.data()),
             static_cast<std::streamsize>(var->value.data.size() * 8));
  }
  if (!os) throw UnreadableFile(path + ": tensor write failed");
}

inline std::map<std::string, nn::Tensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UnreadableFile(path + ": cannot open tensor container");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw UnsupportedFormat(path + ": bad tensor container magic");
  uint32_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 4);
  std::map<std::string, nn::Tensor> out;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), 2);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint8_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 1);
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) is.read(reinterpret_cast<char*>(&d), 8);
    if (!is) throw UnreadableFile(path + ": truncated tensor header");
    nn::Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 8));
    if (!is) throw UnreadableFile(path + ": truncated tensor data");
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace tensorio

namespace checkpoint_detail {

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {{"patch_size", cfg.patch_size}, {"dim", cfg.dim},
          {"depths", cfg.depths},         {"window", cfg.window},
          {"heads", cfg.heads},           {"num_events", cfg.num_events},
          {"num_scenes", cfg.num_scenes}, {"alpha", cfg.alpha},
          {"dropout", cfg.dropout},       {"mlp_ratio", cfg.mlp_ratio},
          {"sed_kernel", cfg.sed_kernel}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.patch_size = j.at("patch_size").get<int>();
  cfg.dim = j.at("dim").get<int>();
  cfg.depths = j.at("depths").get<std::vector<int>>();
  cfg.window = j.at("window").get<int>();
  cfg.heads = j.at("heads").get<std::vector<int>>();
  cfg.num_events = j.at("num_events").get<int>();
  cfg.num_scenes = j.at("num_scenes").get<int>();
  cfg.alpha = j.at("alpha").get<double>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.mlp_ratio = j.at("mlp_ratio").get<double>();
  cfg.sed_kernel = j.at("sed_kernel").get<int>();
  cfg.validate();
  return cfg;
}

inline nlohmann::json stft_config_to_json(const StftConfig& cfg) {
  return {{"window_size", cfg.window_size},
          {"hop_length", cfg.hop_length},
          {"n_mels", cfg.n_mels},
          {"sample_rate", cfg.sample_rate},
          {"log_floor", cfg.log_floor}};
}

inline StftConfig stft_config_from_json(const nlohmann::json& j) {
  StftConfig cfg;
  cfg.window_size = j.at("window_size").get<int>();
  cfg.hop_length = j.at("hop_length").get<int>();
  cfg.n_mels = j.at("n_mels").get<int>();
  cfg.sample_rate = j.at("sample_rate").get<int>();
  cfg.log_floor = j.at("log_floor").get<double>();
  cfg.validate();
  return cfg;
}

}  // namespace checkpoint_detail

inline void save_checkpoint(const std::string& dir, const ModelBundle& bundle) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json config = {
      {"schema_version", kCheckpointSchemaVersion},
      {"model", checkpoint_detail::model_config_to_json(bundle.model_cfg)},
      {"stft", checkpoint_detail::stft_config_to_json(bundle.stft)},
      {"labels",
       {{"scenes", bundle.scene_labels}, {"events", bundle.event_labels}}}};
  std::ofstream cfg_out(fs::path(dir) / "config.json");
  if (!cfg_out) throw UnreadableFile(dir + ": cannot write config.json");
  cfg_out << config.dump(2) << "\n";

  nlohmann::json stats = {{"mean", bundle.stats.mean},
                          {"std", bundle.stats.std_dev}};
  std::ofstream stats_out(fs::path(dir) / "norm_stats.json");
  if (!stats_out) throw UnreadableFile(dir + ": cannot write norm_stats.json");
  stats_out << stats.dump(2) << "\n";

  tensorio::save_tensors((fs::path(dir) / "params.tensors").string(),
                         bundle.model.params());
}

inline ModelBundle load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream cfg_in(fs::path(dir) / "config.json");
  if (!cfg_in) throw UnreadableFile(dir + ": missing config.json");
  nlohmann::json config;
  try {
    cfg_in >> config;
  } catch (const nlohmann::json::exception& e) {
    throw UnsupportedFormat(dir + ": config.json: " + std::string(e.what()));
  }
  if (config.value("schema_version", -1) != kCheckpointSchemaVersion)
    throw UnsupportedFormat(dir + ": unsupported checkpoint schema version");

  ModelBundle bundle;
  bundle.model_cfg =
      checkpoint_detail::model_config_from_json(config.at("model"));
  bundle.stft = checkpoint_detail::stft_config_from_json(config.at("stft"));
  bundle.scene_labels =
      config.at("labels").at("scenes").get<std::vector<std::string>>();
  bundle.event_labels =
      config.at("labels").at("events").get<std::vector<std::string>>();
  if (static_cast<int>(bundle.scene_labels.size()) !=
          bundle.model_cfg.num_scenes ||
      static_cast<int>(bundle.event_labels.size()) !=
          bundle.model_cfg.num_events)
    throw VocabularyMismatch(dir + ": label lists do not match class counts");

  std::ifstream stats_in(fs::path(dir) / "norm_stats.json");
  if (!stats_in) throw UnreadableFile(dir + ": missing norm_stats.json");
  nlohmann::json stats;
  try {
    stats_in >> stats;
  } catch (const nlohmann::json::exception& e) {
    throw UnsupportedFormat(dir + ": norm_stats.json: " +
                            std::string(e.what()));
  }
  bundle.stats.mean = stats.at("mean").get<std::vector<double>>();
  bundle.stats.std_dev = stats.at("std").get<std::vector<double>>();

  bundle.model = AudioLogModel(bundle.model_cfg, 0);
  auto tensors =
      tensorio::load_tensors((fs::path(dir) / "params.tensors").string());
  for (auto& [name, var] : bundle.model.params()) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw UnsupportedFormat(dir + ": checkpoint missing tensor " + name);
    if (it->second.shape != var->value.shape)
      throw ShapeMismatch(dir + ": tensor " + name + " has shape " +
                          it->second.shape_str() + ", expected " +
                          var->value.shape_str());
    var->value = std::move(it->second);
    tensors.erase(it);
  }
  if (!tensors.empty())
    throw UnsupportedFormat(dir + ": checkpoint has unknown tensor " +
                            tensors.begin()->first);
  return bundle;
}

}  // namespace audiolog
