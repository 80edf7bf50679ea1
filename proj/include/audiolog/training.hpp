// Copyright 2026 AudioLog Authors
// Joint-training harness: AdamW, the fit loop with early stopping, and
// dataset-level evaluation (ACC / ER / F1).
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "audiolog/checkpoint.hpp"
#include "audiolog/data.hpp"
#include "audiolog/inference.hpp"
#include "audiolog/metrics.hpp"
#include "audiolog/model.hpp"
#include "json.hpp"

namespace audiolog {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 100;
  double weight_decay = 0.01;
  uint64_t seed = 0;
  double alpha = 0.7;
  std::string checkpoint_dir;
  int early_stop_patience = 10;  // validation runs without F1 improvement
  int val_every = 1;             // validate every n-th epoch
  std::vector<std::string> freeze_prefixes;  // parameter-name prefixes to pin

  void validate() const {
    if (learning_rate < 0) throw ConfigError("train: learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (weight_decay < 0) throw ConfigError("train: weight_decay must be >= 0");
    if (alpha < 0) throw ConfigError("train: alpha must be >= 0");
    if (early_stop_patience < 1) throw ConfigError("train: patience must be >= 1");
    if (val_every < 1) throw ConfigError("train: val_every must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double sed_loss = 0.0;
  double scene_loss = 0.0;
  bool has_val = false;
  double val_acc = 0.0;
  double val_er = 0.0;
  double val_f1 = 0.0;
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;       // 1-based; -1 when no validation ran
  double best_val_f1 = 0.0;
  double final_train_loss = 0.0;
  uint64_t seed = 0;
  double alpha = 0.7;
};

struct EvalMetrics {
  double acc = 0.0;
  double er = 0.0;
  double f1 = 0.0;
  SegmentCounts counts;
};

// Decoupled weight decay; update and decay both scale with the learning
// rate, so lr = 0 leaves parameters bit-for-bit untouched.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(std::map<std::string, nn::Var>& params,
            const std::function<bool(const std::string&)>& frozen = {}) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto& [name, var] : params) {
      if (frozen && frozen(name)) continue;
      if (var->grad.data.empty()) continue;
      auto& [m, v] = state_[name];
      if (m.shape != var->value.shape) {
        m = nn::Tensor::zeros(var->value.shape);
        v = nn::Tensor::zeros(var->value.shape);
      }
      for (int64_t i = 0; i < var->value.numel(); ++i) {
        const double g = var->grad[i];
        m[i] = b1_ * m[i] + (1.0 - b1_) * g;
        v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        var->value[i] -=
            lr_ * (m_hat / (std::sqrt(v_hat) + eps_) + wd_ * var->value[i]);
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<nn::Tensor, nn::Tensor>> state_;
};

// Dataset-level metrics: clip accuracy from the averaged scene logits plus
// micro-averaged segment ER/F1 over all clips.
inline EvalMetrics evaluate(const ModelBundle& bundle,
                            const std::vector<AnnotatedClip>& clips,
                            const PostprocessConfig& ppcfg) {
  if (clips.empty()) throw EmptyDataset("evaluate: no clips");
  std::vector<std::string> pred_scenes, ref_scenes;
  SegmentCounts totals;
  for (const auto& clip : clips) {
    const ClipInference ci = infer_clip(bundle, clip.clip, ppcfg);
    pred_scenes.push_back(
        bundle.scene_labels[static_cast<size_t>(ci.scene_id)]);
    ref_scenes.push_back(clip.scene);
    const EventTable ref = reference_table(clip);
    const double horizon =
        std::max(ref.duration_s, ci.table.duration_s);
    totals.accumulate(
        segment_counts(ref, ci.table, horizon, &bundle.event_labels));
  }
  EvalMetrics out;
  out.acc = accuracy(pred_scenes, ref_scenes);
  const SedMetrics sed = metrics_from_counts(totals);
  out.er = sed.er;
  out.f1 = sed.f1;
  out.counts = sed.counts;
  return out;
}

namespace training_detail {

struct PreparedClip {
  LogMelSpectrogram spec;  // padded + normalized
  Targets targets;
};

inline std::vector<PreparedClip> prepare_dataset(
    ModelBundle& bundle, const std::vector<AnnotatedClip>& clips) {
  const Vocabulary event_vocab = Vocabulary::from_labels(bundle.event_labels);
  const Vocabulary scene_vocab = Vocabulary::from_labels(bundle.scene_labels);
  const double frame_rate =
      static_cast<double>(bundle.stft.sample_rate) / bundle.stft.hop_length;

  std::vector<LogMelSpectrogram> raw;
  raw.reserve(clips.size());
  for (const auto& clip : clips)
    raw.push_back(compute_logmel(clip.clip, bundle.stft));

  if (bundle.stats.empty()) {  // fresh run; fine-tunes keep checkpoint stats
    std::vector<const LogMelSpectrogram*> ptrs;
    for (const auto& s : raw) ptrs.push_back(&s);
    bundle.stats = NormStats::compute(ptrs);
  }

  std::vector<PreparedClip> out;
  out.reserve(clips.size());
  for (size_t i = 0; i < clips.size(); ++i) {
    PreparedClip pc;
    pc.spec = pad_to_patch_multiple(raw[i], bundle.model_cfg.patch_size,
                                    ModelConfig::kMerges);
    bundle.stats.apply(pc.spec);
    pc.targets = targets_from_annotations(clips[i], frame_rate, event_vocab,
                                          scene_vocab, pc.spec.frames());
    out.push_back(std::move(pc));
  }
  return out;
}

inline void write_report(const std::string& dir, const TrainReport& report) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream jsonl(fs::path(dir) / "report.jsonl");
  if (!jsonl) throw UnreadableFile(dir + ": cannot write report.jsonl");
  for (const auto& e : report.epochs) {
    nlohmann::json j = {{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"sed_loss", e.sed_loss},
                        {"scene_loss", e.scene_loss},
                        {"wall_ms", e.wall_ms}};
    if (e.has_val) {
      j["val_acc"] = e.val_acc;
      j["val_er"] = e.val_er;
      j["val_f1"] = e.val_f1;
    }
    jsonl << j.dump() << "\n";
  }
  nlohmann::json summary = {{"epochs_run", report.epochs.size()},
                            {"best_epoch", report.best_epoch},
                            {"best_val_f1", report.best_val_f1},
                            {"final_train_loss", report.final_train_loss},
                            {"seed", report.seed},
                            {"alpha", report.alpha}};
  std::ofstream sum(fs::path(dir) / "summary.json");
  if (!sum) throw UnreadableFile(dir + ": cannot write summary.json");
  sum << summary.dump(2) << "\n";
}

}  // namespace training_detail

// Joint training on (spectrogram, targets) pairs. Deterministic for a fixed
// seed: feature prep, shuffling and updates are all single-threaded and
// seeded. The best-validation parameters are restored at the end and the
// checkpoint plus report land in cfg.checkpoint_dir when it is set.
inline TrainReport fit(ModelBundle& bundle,
                       const std::vector<AnnotatedClip>& train_clips,
                       const std::vector<AnnotatedClip>& val_clips,
                       const TrainConfig& cfg, const PostprocessConfig& ppcfg) {
  cfg.validate();
  if (train_clips.empty()) throw EmptyDataset("fit: no training clips");

  auto prepared = training_detail::prepare_dataset(bundle, train_clips);
  auto& params = bundle.model.params();
  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  auto frozen = [&cfg](const std::string& name) {
    for (const auto& prefix : cfg.freeze_prefixes)
      if (name.rfind(prefix, 0) == 0) return true;
    return false;
  };

  nn::Rng shuffle_rng(cfg.seed ^ 0xA5D10F17ULL);
  bundle.model.seed_dropout(cfg.seed ^ 0xD20900DULL);
  bundle.model.set_train(true);

  TrainReport report;
  report.seed = cfg.seed;
  report.alpha = cfg.alpha;
  std::map<std::string, nn::Tensor> best_params;
  int best_epoch = -1;
  double best_f1 = -1.0;
  int vals_since_best = 0;

  std::vector<size_t> order(prepared.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0, sed_sum = 0.0, scene_sum = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(
          order.size(), start + static_cast<size_t>(cfg.batch_size));
      bundle.model.zero_grad();
      nn::Var batch_loss;
      for (size_t i = start; i < stop; ++i) {
        const auto& pc = prepared[order[i]];
        auto graph = bundle.model.forward_graph(pc.spec);
        auto loss = bundle.model.loss_graph(graph, pc.targets, cfg.alpha);
        batch_loss = batch_loss ? nn::add(batch_loss, loss) : loss;

        // component bookkeeping from the same forward pass
        Predictions pred;
        pred.sed_probs = graph.sed_logits->value;
        for (double& v : pred.sed_probs.data)
          v = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                     : std::exp(v) / (1.0 + std::exp(v));
        pred.scene_logits = graph.scene_logits->value;
        sed_sum += sed_bce(pred.sed_probs, pc.targets.sed);
        scene_sum += scene_ce(pred.scene_logits, pc.targets.scene);
      }
      batch_loss =
          nn::scale(batch_loss, 1.0 / static_cast<double>(stop - start));
      const double loss_value = batch_loss->value[0];
      if (!std::isfinite(loss_value))
        throw DivergedTraining(
            "fit: non-finite loss at epoch " + std::to_string(epoch) +
            ", batch starting at clip " + std::to_string(start));
      loss_sum += loss_value * static_cast<double>(stop - start);
      nn::backward(batch_loss);
      opt.step(params, frozen);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(prepared.size());
    rec.sed_loss = sed_sum / static_cast<double>(prepared.size());
    rec.scene_loss = scene_sum / static_cast<double>(prepared.size());

    if (!val_clips.empty() &&
        (epoch % cfg.val_every == 0 || epoch == cfg.epochs)) {
      bundle.model.set_train(false);
      const EvalMetrics m = evaluate(bundle, val_clips, ppcfg);
      bundle.model.set_train(true);
      rec.has_val = true;
      rec.val_acc = m.acc;
      rec.val_er = m.er;
      rec.val_f1 = m.f1;
      if (m.f1 > best_f1) {
        best_f1 = m.f1;
        best_epoch = epoch;
        vals_since_best = 0;
        best_params.clear();
        for (const auto& [name, var] : params) best_params[name] = var->value;
      } else {
        ++vals_since_best;
      }
    }

    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    report.epochs.push_back(rec);

    if (vals_since_best >= cfg.early_stop_patience) break;
  }

  bundle.model.set_train(false);
  if (best_epoch > 0) {
    for (auto& [name, var] : params) var->value = best_params.at(name);
    report.best_epoch = best_epoch;
    report.best_val_f1 = best_f1;
  }
  report.final_train_loss = report.epochs.back().train_loss;

  if (!cfg.checkpoint_dir.empty()) {
    save_checkpoint(cfg.checkpoint_dir, bundle);
    training_detail::write_report(cfg.checkpoint_dir, report);
  }
  return report;
}

}  // namespace audiolog
