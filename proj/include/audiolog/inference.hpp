// Copyright 2026 AudioLog Authors
// Glue between the model bundle and the long-audio pipeline.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "audiolog/checkpoint.hpp"
#include "audiolog/features.hpp"
#include "audiolog/model.hpp"
#include "audiolog/pipeline.hpp"

namespace audiolog {

// log-Mel -> patch-alignment padding -> per-bin standardization.
inline LogMelSpectrogram prepare_features(const ModelBundle& bundle,
                                          const AudioClip& clip) {
  LogMelSpectrogram spec = compute_logmel(clip, bundle.stft);
  spec = pad_to_patch_multiple(spec, bundle.model_cfg.patch_size,
                               ModelConfig::kMerges);
  bundle.stats.apply(spec);
  return spec;
}

struct ClipInference {
  EventTable table;
  nn::Tensor mean_scene_logits;  // averaged over segments
  int scene_id = 0;
};

// Segment the clip, run the model per segment, post-process to 1-second
// resolution and assemble the output table. Rows are emitted only for true
// audio seconds even though the final segment is zero-padded for the model.
inline ClipInference infer_clip(const ModelBundle& bundle,
                                const AudioClip& clip,
                                const PostprocessConfig& ppcfg) {
  ppcfg.validate();
  if (ppcfg.segment_hop_s != ppcfg.segment_len_s)
    throw ConfigError(
        "infer: segment hop must equal segment length (no "
        "overlapping-segment ensembling)");
  if (clip.sample_rate != bundle.stft.sample_rate)
    throw ConfigError("infer: clip sample rate does not match the checkpoint");

  const auto segments = segment_long_audio(clip, ppcfg);
  const double frame_rate =
      static_cast<double>(bundle.stft.sample_rate) / bundle.stft.hop_length;
  const auto horizon =
      static_cast<int64_t>(std::ceil(clip.duration_s() - 1e-9));

  ActivityGrid grid =
      ActivityGrid::zeros(horizon, bundle.model_cfg.num_events);
  std::vector<SegmentScenePrediction> scene_preds;
  nn::Tensor logit_sum({bundle.model_cfg.num_scenes});
  int64_t second_offset = 0;
  for (const auto& seg : segments) {
    const LogMelSpectrogram spec = prepare_features(bundle, seg.clip);
    const Predictions pred = bundle.model.forward(spec);
    const auto true_frames = static_cast<int64_t>(
        std::ceil(seg.true_len_s * frame_rate - 1e-9));
    const ActivityGrid seg_grid =
        binarize_and_smooth(pred.sed_probs, frame_rate, true_frames, ppcfg);
    for (int64_t s = 0; s < seg_grid.seconds; ++s)
      for (int64_t c = 0; c < seg_grid.classes; ++c)
        if (second_offset + s < horizon)
          grid.set(second_offset + s, c, seg_grid.at(s, c));
    second_offset += seg_grid.seconds;

    SegmentScenePrediction sp;
    sp.start_s = seg.start_s;
    sp.true_len_s = seg.true_len_s;
    sp.scene_logits = pred.scene_logits;
    scene_preds.push_back(std::move(sp));
    for (int64_t c = 0; c < logit_sum.numel(); ++c)
      logit_sum[c] += pred.scene_logits[c];
  }

  const std::vector<int> scenes = scene_per_second(scene_preds, horizon, ppcfg);

  ClipInference out;
  out.table = assemble_table(scenes, grid, bundle.scene_labels,
                             bundle.event_labels,
                             static_cast<double>(horizon));
  out.mean_scene_logits = logit_sum;
  for (int64_t c = 0; c < out.mean_scene_logits.numel(); ++c)
    out.mean_scene_logits[c] /= static_cast<double>(segments.size());
  out.scene_id = 0;
  for (int64_t c = 1; c < out.mean_scene_logits.numel(); ++c)
    if (out.mean_scene_logits[c] > out.mean_scene_logits[out.scene_id])
      out.scene_id = static_cast<int>(c);
  return out;
}

inline EventTable infer_event_table(const ModelBundle& bundle,
                                    const AudioClip& clip,
                                    const PostprocessConfig& ppcfg) {
  return infer_clip(bundle, clip, ppcfg).table;
}

}  // namespace audiolog
