// Copyright 2026 AudioLog Authors
// Command-line entry points: synth, train, infer, log, eval.
//
// Licensed under the Apache License, Version 2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "audiolog/audiolog.hpp"

namespace fs = std::filesystem;
using namespace audiolog;

namespace {

// Exit codes are part of the tool contract:
//   0 success, 2 configuration/validation, 3 training divergence,
//   4 model/audio mismatch, 5 provider failure.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitModelAudio = 4;
constexpr int kExitProvider = 5;

struct CommonFlags {
  std::string config_path;
  std::optional<double> alpha;
  std::optional<double> threshold;
  std::optional<int> segment_len;
  std::optional<uint64_t> seed;
  bool deterministic = false;
};

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return load_run_config(path);
}

void apply_overrides(RunConfig& cfg, const CommonFlags& flags) {
  if (flags.alpha) cfg.training.alpha = *flags.alpha;
  if (flags.threshold) cfg.postprocess.threshold = *flags.threshold;
  if (flags.segment_len) {
    cfg.postprocess.segment_len_s = *flags.segment_len;
    cfg.postprocess.segment_hop_s = *flags.segment_len;
  }
  if (flags.seed) cfg.training.seed = *flags.seed;
}

void require_key(const std::string& value, const std::string& key) {
  if (value.empty())
    throw ConfigError("config: '" + key + "' is required for this command");
}

std::vector<AnnotatedClip> load_dataset(const RunConfig& cfg,
                                        const Vocabulary& event_vocab,
                                        const Vocabulary& scene_vocab,
                                        bool validation_split) {
  const std::string annotations =
      validation_split ? cfg.data.val_annotations : cfg.data.annotations;
  const std::string scene_map =
      validation_split ? cfg.data.val_scene_map : cfg.data.scene_map;
  return load_strong_labels(annotations, scene_map, cfg.data.audio_root,
                            event_vocab, scene_vocab,
                            cfg.features.sample_rate);
}

int cmd_synth(const std::string& out_dir, int clips, int scenes, int events,
              double clip_len, int events_min, int events_max, uint64_t seed) {
  SynthConfig synth;
  synth.n_clips = clips;
  synth.num_scenes = scenes;
  synth.num_events = events;
  synth.clip_len_s = clip_len;
  synth.events_min = events_min;
  synth.events_max = events_max;
  synth.seed = seed;
  synth.validate();

  const Vocabulary event_vocab = default_event_vocab(events);
  const Vocabulary scene_vocab = default_scene_vocab(scenes);
  const auto dataset = generate_synthetic_dataset(synth, event_vocab,
                                                  scene_vocab);
  write_dataset(out_dir, dataset, event_vocab, scene_vocab);

  // training-ready config pointing at the generated files
  RunConfig cfg;
  cfg.model.patch_size = 4;
  cfg.model.dim = 16;
  cfg.model.depths = {1, 1, 1, 1};
  cfg.model.heads = {1, 1, 1, 1};
  cfg.model.window = 8;
  cfg.model.mlp_ratio = 2.0;
  cfg.training.learning_rate = 5e-3;
  cfg.training.batch_size = 4;
  cfg.training.epochs = 120;
  cfg.training.seed = seed;
  cfg.training.val_every = 10;
  cfg.training.checkpoint_dir = (fs::path(out_dir) / "checkpoint").string();
  // inference segments match the training clip length, so the model sees the
  // same input distribution in both paths
  cfg.postprocess.segment_len_s =
      static_cast<int>(std::ceil(clip_len - 1e-9));
  cfg.postprocess.segment_hop_s = cfg.postprocess.segment_len_s;
  cfg.data.audio_root = (fs::path(out_dir) / "audio").string();
  cfg.data.annotations = (fs::path(out_dir) / "events.tsv").string();
  cfg.data.scene_map = (fs::path(out_dir) / "scenes.csv").string();
  cfg.data.event_vocab = (fs::path(out_dir) / "event_vocab.txt").string();
  cfg.data.scene_vocab = (fs::path(out_dir) / "scene_vocab.txt").string();
  write_run_config((fs::path(out_dir) / "config.json").string(), cfg);

  std::cout << nlohmann::json({{"dataset_dir", out_dir},
                               {"clips", clips},
                               {"scenes", scenes},
                               {"events", events},
                               {"config", (fs::path(out_dir) / "config.json")
                                              .string()}})
                   .dump()
            << "\n";
  return kExitOk;
}

int cmd_train(const CommonFlags& flags, const std::string& init_from) {
  RunConfig cfg;
  try {
    require_key(flags.config_path, "--config");
    cfg = load_run_config(flags.config_path);
    apply_overrides(cfg, flags);
    require_key(cfg.data.annotations, "data.annotations");
    require_key(cfg.data.scene_map, "data.scene_map");
    require_key(cfg.data.audio_root, "data.audio_root");
    require_key(cfg.data.event_vocab, "data.event_vocab");
    require_key(cfg.data.scene_vocab, "data.scene_vocab");
    require_key(cfg.training.checkpoint_dir, "training.checkpoint_dir");
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const Vocabulary event_vocab = Vocabulary::from_file(cfg.data.event_vocab);
    const Vocabulary scene_vocab = Vocabulary::from_file(cfg.data.scene_vocab);

    ModelBundle bundle;
    if (!init_from.empty()) {
      // fine-tune from an existing checkpoint: architecture, weights and
      // normalization statistics come from it, the dataset must agree
      bundle = load_checkpoint(init_from);
      if (bundle.event_labels != event_vocab.labels ||
          bundle.scene_labels != scene_vocab.labels)
        throw VocabularyMismatch(
            "train: dataset vocabularies do not match the checkpoint");
      bundle.model_cfg.alpha = cfg.training.alpha;
    } else {
      bundle.model_cfg = cfg.model;
      bundle.model_cfg.num_events = event_vocab.size();
      bundle.model_cfg.num_scenes = scene_vocab.size();
      bundle.model_cfg.alpha = cfg.training.alpha;
      bundle.stft = cfg.features;
      bundle.event_labels = event_vocab.labels;
      bundle.scene_labels = scene_vocab.labels;
      bundle.model = AudioLogModel(bundle.model_cfg, cfg.training.seed);
    }

    const auto train_clips =
        load_dataset(cfg, event_vocab, scene_vocab, false);
    const auto val_clips =
        cfg.data.val_annotations.empty()
            ? train_clips
            : load_dataset(cfg, event_vocab, scene_vocab, true);

    const TrainReport report =
        fit(bundle, train_clips, val_clips, cfg.training, cfg.postprocess);

    nlohmann::json out = {
        {"checkpoint_dir", cfg.training.checkpoint_dir},
        {"epochs_run", report.epochs.size()},
        {"final_train_loss", report.final_train_loss},
        {"best_epoch", report.best_epoch},
        {"best_val_f1", report.best_val_f1},
        {"alpha", report.alpha},
        {"seed", report.seed},
        {"deterministic", flags.deterministic}};
    std::cout << out.dump() << "\n";
    return kExitOk;
  } catch (const DivergedTraining& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

int cmd_infer(const std::string& checkpoint_dir, const std::string& audio_path,
              const std::string& out_path, const std::string& format_name,
              const CommonFlags& flags) {
  RunConfig cfg;
  TableFormat format;
  try {
    cfg = load_config_or_default(flags.config_path);
    apply_overrides(cfg, flags);
    format = table_format_from_name(format_name);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const ModelBundle bundle = load_checkpoint(checkpoint_dir);
    const AudioClip clip = load_audio(audio_path, bundle.stft.sample_rate);
    const EventTable table = infer_event_table(bundle, clip, cfg.postprocess);
    const std::string text = serialize_table(table, format);
    std::ofstream os(out_path);
    if (!os) throw UnreadableFile(out_path + ": cannot write table");
    os << text;
    os.close();
    std::cout << text;
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitModelAudio;
  }
}

int cmd_log(const std::string& table_path, const std::string& table_format,
            const std::string& template_name, const std::string& provider_name,
            const std::string& out_path, const CommonFlags& flags) {
  EventTable table;
  PromptTemplate tmpl;
  RunConfig cfg;
  try {
    cfg = load_config_or_default(flags.config_path);
    std::ifstream is(table_path);
    if (!is) throw UnreadableFile(table_path + ": cannot open table");
    std::string text((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
    table = parse_table(text, table_format_from_name(table_format));
    try {
      tmpl = PromptTemplate::by_name(template_name);
    } catch (const ConfigError&) {
      std::string valid;
      for (const auto& n : PromptTemplate::names()) valid += " " + n;
      throw ConfigError("unknown template '" + template_name +
                        "'; valid names:" + valid);
    }
    if (!provider_name.empty()) cfg.provider.provider_id = provider_name;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const AudioLogResult result = summarize(table, tmpl, cfg.provider);
    std::ofstream os(out_path);
    if (!os) throw ConfigError(out_path + ": cannot write summary");
    os << result.response_text << "\n";
    os.close();
    // result JSON lands next to the table
    const fs::path json_path =
        fs::path(table_path).replace_extension(".audiolog.json");
    std::ofstream js(json_path);
    if (!js) throw ConfigError(json_path.string() + ": cannot write result");
    js << result_to_json(result).dump(2) << "\n";
    std::cout << result.response_text << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitProvider;
  }
}

int cmd_eval(const std::string& ref_path, const std::string& est_path,
             const std::string& table_format, double horizon,
             const std::string& checkpoint_dir, const std::string& out_path,
             const CommonFlags& flags) {
  try {
    nlohmann::json out;
    if (!ref_path.empty() && !est_path.empty()) {
      const auto format = table_format_from_name(table_format);
      auto read_table = [&](const std::string& p) {
        std::ifstream is(p);
        if (!is) throw UnreadableFile(p + ": cannot open table");
        std::string text((std::istreambuf_iterator<char>(is)),
                         std::istreambuf_iterator<char>());
        return parse_table(text, format);
      };
      const EventTable ref = read_table(ref_path);
      const EventTable est = read_table(est_path);
      const double h =
          horizon > 0 ? horizon : std::max(ref.duration_s, est.duration_s);
      const SedMetrics m = segment_er_f1(ref, est, h);
      out = {{"er", m.er},
             {"f1", m.f1},
             {"counts",
              {{"N", m.counts.N},
               {"S", m.counts.S},
               {"D", m.counts.D},
               {"I", m.counts.I},
               {"TP", m.counts.TP},
               {"FP", m.counts.FP},
               {"FN", m.counts.FN}}}};
    } else if (!checkpoint_dir.empty()) {
      RunConfig cfg = load_run_config(flags.config_path);
      apply_overrides(cfg, flags);
      const ModelBundle bundle = load_checkpoint(checkpoint_dir);
      const Vocabulary event_vocab =
          Vocabulary::from_labels(bundle.event_labels);
      const Vocabulary scene_vocab =
          Vocabulary::from_labels(bundle.scene_labels);
      const auto clips = load_dataset(cfg, event_vocab, scene_vocab, false);
      const EvalMetrics m = evaluate(bundle, clips, cfg.postprocess);
      out = {{"acc", m.acc},
             {"er", m.er},
             {"f1", m.f1},
             {"counts",
              {{"N", m.counts.N},
               {"S", m.counts.S},
               {"D", m.counts.D},
               {"I", m.counts.I},
               {"TP", m.counts.TP},
               {"FP", m.counts.FP},
               {"FN", m.counts.FN}}}};
    } else {
      throw ConfigError(
          "eval: pass --ref and --est tables, or --checkpoint with --config");
    }
    std::cout << out.dump() << "\n";
    if (!out_path.empty()) {
      std::ofstream os(out_path);
      if (!os) throw ConfigError(out_path + ": cannot write metrics");
      os << out.dump(2) << "\n";
    }
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AudioLog: multi-task audio tagging, event tables and "
               "LLM-backed audio logs"};
  app.require_subcommand(1);

  CommonFlags flags;
  double alpha_flag = -1.0, threshold_flag = -1.0;
  int segment_len_flag = -1;
  uint64_t seed_flag = 0;

  auto add_common = [&](CLI::App* cmd, bool with_config = true) {
    if (with_config)
      cmd->add_option("--config", flags.config_path, "run configuration JSON");
    cmd->add_option("--alpha", alpha_flag, "joint loss weight override");
    cmd->add_option("--threshold", threshold_flag,
                    "event probability cutoff override");
    cmd->add_option("--segment-len", segment_len_flag,
                    "segment length override, seconds");
    cmd->add_option("--seed", seed_flag, "seed override")
        ->default_val(std::to_string(seed_flag));
    cmd->add_flag("--deterministic", flags.deterministic,
                  "force deterministic single-threaded execution");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out = "synth_data";
  int synth_clips = 8, synth_scenes = 3, synth_events = 4;
  int synth_events_min = 2, synth_events_max = 2;
  double synth_clip_len = 4.0;
  uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--clips", synth_clips, "number of clips");
  synth->add_option("--scenes", synth_scenes, "number of scene classes");
  synth->add_option("--events", synth_events, "number of event classes");
  synth->add_option("--clip-len", synth_clip_len, "clip length, seconds");
  synth->add_option("--events-min", synth_events_min, "min events per clip");
  synth->add_option("--events-max", synth_events_max, "max events per clip");
  synth->add_option("--seed", synth_seed, "generator seed");

  // train
  auto* train = app.add_subcommand("train", "fit the multi-task model");
  std::string train_init_from;
  train->add_option("--init-from", train_init_from,
                    "checkpoint directory to fine-tune from");
  add_common(train);

  // infer
  auto* infer = app.add_subcommand("infer", "produce the event table");
  std::string infer_checkpoint, infer_audio, infer_out = "table.csv";
  std::string infer_format = "csv";
  infer->add_option("--checkpoint", infer_checkpoint, "checkpoint directory")
      ->required();
  infer->add_option("--audio", infer_audio, "input WAV/FLAC file")->required();
  infer->add_option("--out", infer_out, "output table path");
  infer->add_option("--format", infer_format, "csv, tsv or markdown");
  add_common(infer);

  // log
  auto* log = app.add_subcommand("log", "summarize a table into an audio log");
  std::string log_table, log_table_format = "csv", log_template = "prompt1";
  std::string log_provider, log_out = "audiolog.txt";
  log->add_option("--table", log_table, "event table path")->required();
  log->add_option("--table-format", log_table_format, "csv, tsv or markdown");
  log->add_option("--template", log_template, "prompt1, prompt2 or prompt3");
  log->add_option("--provider", log_provider, "mock or http");
  log->add_option("--out", log_out, "summary text output path");
  add_common(log);

  // eval
  auto* eval = app.add_subcommand("eval", "score tables or a checkpoint");
  std::string eval_ref, eval_est, eval_format = "csv", eval_checkpoint;
  std::string eval_out;
  double eval_horizon = 0.0;
  eval->add_option("--ref", eval_ref, "reference table");
  eval->add_option("--est", eval_est, "estimated table");
  eval->add_option("--table-format", eval_format, "csv, tsv or markdown");
  eval->add_option("--horizon", eval_horizon, "scoring horizon, seconds");
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory");
  eval->add_option("--out", eval_out, "metrics JSON output path");
  add_common(eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  if (app.count_all() > 1) {  // post-parse: stash optional overrides
    if (train->count("--alpha") || infer->count("--alpha") ||
        log->count("--alpha") || eval->count("--alpha"))
      flags.alpha = alpha_flag;
    if (train->count("--threshold") || infer->count("--threshold") ||
        log->count("--threshold") || eval->count("--threshold"))
      flags.threshold = threshold_flag;
    if (train->count("--segment-len") || infer->count("--segment-len") ||
        log->count("--segment-len") || eval->count("--segment-len"))
      flags.segment_len = segment_len_flag;
    if (train->count("--seed") || infer->count("--seed") ||
        log->count("--seed") || eval->count("--seed"))
      flags.seed = seed_flag;
  }

  if (synth->parsed())
    return cmd_synth(synth_out, synth_clips, synth_scenes, synth_events,
                     synth_clip_len, synth_events_min, synth_events_max,
                     synth_seed);
  if (train->parsed()) return cmd_train(flags, train_init_from);
  if (infer->parsed())
    return cmd_infer(infer_checkpoint, infer_audio, infer_out, infer_format,
                     flags);
  if (log->parsed())
    return cmd_log(log_table, log_table_format, log_template, log_provider,
                   log_out, flags);
  if (eval->parsed())
    return cmd_eval(eval_ref, eval_est, eval_format, eval_horizon,
                    eval_checkpoint, eval_out, flags);
  return kExitConfig;
}
