// Copyright 2026 AudioLog Authors
// Hierarchical shifted-window attention encoder with a token-semantic event
// head, a fully-connected scene head and the weighted joint loss.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <array>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "audiolog/autodiff.hpp"
#include "audiolog/error.hpp"
#include "audiolog/features.hpp"
#include "audiolog/tensor.hpp"

namespace audiolog {

struct ModelConfig {
  int patch_size = 4;                   // P
  int dim = 96;                         // D, channels double at each merge
  std::vector<int> depths{2, 2, 6, 2};  // attention blocks per group
  int window = 8;                       // attention window side, token units
  std::vector<int> heads{4, 8, 16, 32};
  int num_events = 11;  // K_e
  int num_scenes = 5;   // K_s
  double alpha = 0.7;   // joint loss weight on the scene term
  double dropout = 0.0;
  double mlp_ratio = 4.0;
  int sed_kernel = 3;  // token-semantic conv kernel

  static constexpr int kGroups = 4;
  static constexpr int kMerges = 3;  // final group keeps its resolution

  int group_dim(int g) const { return dim << g; }
  int out_dim() const { return dim << kMerges; }
  // Input frames/bins must be multiples of this for the merge chain.
  int alignment() const { return patch_size << kMerges; }

  void validate() const {
    if (static_cast<int>(depths.size()) != kGroups)
      throw ConfigError("model: depths must have 4 entries");
    if (static_cast<int>(heads.size()) != kGroups)
      throw ConfigError("model: heads must have 4 entries");
    if (patch_size < 1) throw ConfigError("model: patch_size must be >= 1");
    if (dim < 1) throw ConfigError("model: dim must be >= 1");
    if (window < 1) throw ConfigError("model: window must be >= 1");
    if (num_events < 1 || num_scenes < 1)
      throw ConfigError("model: class counts must be >= 1");
    if (alpha < 0) throw ConfigError("model: alpha must be >= 0");
    if (dropout < 0 || dropout >= 1)
      throw ConfigError("model: dropout must be in [0, 1)");
    if (sed_kernel < 1 || sed_kernel % 2 == 0)
      throw ConfigError("model: sed_kernel must be odd");
    for (int g = 0; g < kGroups; ++g) {
      if (depths[g] < 1) throw ConfigError("model: depths must be >= 1");
      if (heads[g] < 1 || group_dim(g) % heads[g] != 0)
        throw ConfigError("model: heads must divide the group channel count");
    }
  }
};

struct Predictions {
  nn::Tensor sed_probs;     // [T', K_e], entries in [0, 1]
  nn::Tensor scene_logits;  // [K_s]
};

struct Targets {
  nn::Tensor sed;  // [T', K_e], values in [0, 1] (soft labels allowed)
  int scene = 0;   // index in [0, K_s)
};

// ---- loss arithmetic (value level) ----

// Mean binary cross-entropy of framewise probabilities against targets.
inline double sed_bce(const nn::Tensor& probs, const nn::Tensor& targets) {
  if (!probs.same_shape(targets))
    throw ShapeMismatch("sed_bce: prediction/target shapes differ");
  constexpr double kEps = 1e-12;
  double total = 0.0;
  for (int64_t i = 0; i < probs.numel(); ++i) {
    double p = probs[i];
    p = p < kEps ? kEps : (p > 1.0 - kEps ? 1.0 - kEps : p);
    total -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  return total / static_cast<double>(probs.numel());
}

// Categorical cross-entropy of scene logits against the true class index.
inline double scene_ce(const nn::Tensor& logits, int target) {
  if (target < 0 || target >= logits.numel())
    throw ShapeMismatch("scene_ce: target index out of range");
  double mx = logits[0];
  for (int64_t i = 1; i < logits.numel(); ++i) mx = std::max(mx, logits[i]);
  double denom = 0.0;
  for (int64_t i = 0; i < logits.numel(); ++i)
    denom += std::exp(logits[i] - mx);
  return std::log(denom) + mx - logits[target];
}

// L = L_e + alpha * L_s.
inline double mtl_combine(double sed_loss, double scene_loss, double alpha) {
  return sed_loss + alpha * scene_loss;
}

inline double mtl_loss(const Predictions& pred, const Targets& tgt,
                       double alpha) {
  if (alpha < 0) throw ConfigError("mtl_loss: alpha must be >= 0");
  return mtl_combine(sed_bce(pred.sed_probs, tgt.sed),
                     scene_ce(pred.scene_logits, tgt.scene), alpha);
}

// ---- index maps feeding nn::gather ----

namespace model_detail {

using nn::idx::Map;
using nn::idx::make_map;

// Non-overlapping P x P patch extraction: [T*F] -> [(T/P * F/P), P*P].
inline Map patch_unfold(int64_t T, int64_t F, int P) {
  auto m = make_map(static_cast<size_t>(T * F));
  for (int64_t pi = 0; pi < T / P; ++pi)
    for (int64_t pj = 0; pj < F / P; ++pj)
      for (int p = 0; p < P; ++p)
        for (int q = 0; q < P; ++q)
          m->push_back((pi * P + p) * F + pj * P + q);
  return m;
}

struct WindowPlan {
  int wh = 0, ww = 0;      // effective (clamped) window sides
  int sh = 0, sw = 0;      // cyclic shift per axis
  int64_t Hp = 0, Wp = 0;  // padded grid dims
  int64_t n_windows = 0;
  int64_t window_len = 0;  // wh * ww

  // Attention window geometry. Window sides clamp to the grid, the grid pads
  // up to a window multiple, and the shift is half a window where shifting is
  // meaningful (more than one window along the axis).
  static WindowPlan plan(int64_t H, int64_t W, int window, bool shifted) {
    WindowPlan p;
    p.wh = static_cast<int>(std::min<int64_t>(window, H));
    p.ww = static_cast<int>(std::min<int64_t>(window, W));
    p.sh = (shifted && H > p.wh) ? p.wh / 2 : 0;
    p.sw = (shifted && W > p.ww) ? p.ww / 2 : 0;
    p.Hp = (H + p.wh - 1) / p.wh * p.wh;
    p.Wp = (W + p.ww - 1) / p.ww * p.ww;
    p.n_windows = (p.Hp / p.wh) * (p.Wp / p.ww);
    p.window_len = static_cast<int64_t>(p.wh) * p.ww;
    return p;
  }

  bool needs_mask(int64_t H, int64_t W) const {
    return sh > 0 || sw > 0 || Hp != H || Wp != W;
  }
};

// Pad + cyclic shift + window partition fused into one index map:
// [H*W, C] -> [nW * N, C]. Out-of-grid cells map to -1 (zero fill).
inline Map window_partition(int64_t H, int64_t W, int64_t C,
                            const WindowPlan& p) {
  auto m = make_map(static_cast<size_t>(p.n_windows * p.window_len * C));
  for (int64_t wy = 0; wy < p.Hp / p.wh; ++wy)
    for (int64_t wx = 0; wx < p.Wp / p.ww; ++wx)
      for (int y = 0; y < p.wh; ++y)
        for (int x = 0; x < p.ww; ++x) {
          const int64_t h = (wy * p.wh + y + p.sh) % p.Hp;
          const int64_t w = (wx * p.ww + x + p.sw) % p.Wp;
          const bool valid = h < H && w < W;
          for (int64_t c = 0; c < C; ++c)
            m->push_back(valid ? (h * W + w) * C + c : -1);
        }
  return m;
}

// Inverse of window_partition: [nW * N, C] -> [H*W, C] (crops padding).
inline Map window_departition(int64_t H, int64_t W, int64_t C,
                              const WindowPlan& p) {
  auto m = make_map(static_cast<size_t>(H * W * C));
  const int64_t cols = p.Wp / p.ww;
  for (int64_t h = 0; h < H; ++h)
    for (int64_t w = 0; w < W; ++w) {
      const int64_t hp = (h - p.sh + p.Hp) % p.Hp;
      const int64_t wp = (w - p.sw + p.Wp) % p.Wp;
      const int64_t win = (hp / p.wh) * cols + wp / p.ww;
      const int64_t cell = (hp % p.wh) * p.ww + wp % p.ww;
      for (int64_t c = 0; c < C; ++c)
        m->push_back((win * p.window_len + cell) * C + c);
    }
  return m;
}

// Region ids over the padded, rolled layout; cells from non-adjacent source
// regions (or padding) must not attend to each other.
inline nn::Tensor attention_mask(int64_t H, int64_t W, const WindowPlan& p) {
  const int64_t N = p.window_len;
  auto rid = [](int64_t pos, int64_t padded, int win, int shift) -> int64_t {
    if (shift == 0) return 0;
    if (pos < padded - win) return 0;
    return pos < padded - shift ? 1 : 2;
  };
  std::vector<int64_t> ids(static_cast<size_t>(p.n_windows * N));
  for (int64_t wy = 0; wy < p.Hp / p.wh; ++wy)
    for (int64_t wx = 0; wx < p.Wp / p.ww; ++wx)
      for (int y = 0; y < p.wh; ++y)
        for (int x = 0; x < p.ww; ++x) {
          const int64_t hp = wy * p.wh + y;
          const int64_t wp = wx * p.ww + x;
          const int64_t src_h = (hp + p.sh) % p.Hp;
          const int64_t src_w = (wp + p.sw) % p.Wp;
          const int64_t win = wy * (p.Wp / p.ww) + wx;
          const int64_t cell = static_cast<int64_t>(y) * p.ww + x;
          ids[static_cast<size_t>(win * N + cell)] =
              (src_h >= H || src_w >= W)
                  ? -1
                  : rid(hp, p.Hp, p.wh, p.sh) * 3 + rid(wp, p.Wp, p.ww, p.sw);
        }
  nn::Tensor mask({p.n_windows, N, N});
  for (int64_t w = 0; w < p.n_windows; ++w)
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < N; ++j)
        mask[(w * N + i) * N + j] =
            ids[static_cast<size_t>(w * N + i)] ==
                    ids[static_cast<size_t>(w * N + j)]
                ? 0.0
                : -1e9;
  return mask;
}

// [nW*N, 3C] -> [nW*heads, N, head_dim] for q (which=0), k (1) or v (2).
inline Map split_heads(int64_t n_windows, int64_t N, int64_t C, int heads,
                       int which) {
  const int64_t hd = C / heads;
  auto m = make_map(static_cast<size_t>(n_windows * heads * N * hd));
  for (int64_t w = 0; w < n_windows; ++w)
    for (int h = 0; h < heads; ++h)
      for (int64_t n = 0; n < N; ++n)
        for (int64_t d = 0; d < hd; ++d)
          m->push_back((w * N + n) * 3 * C + which * C + h * hd + d);
  return m;
}

// [nW*heads, N, head_dim] -> [nW*N, C].
inline Map merge_heads(int64_t n_windows, int64_t N, int64_t C, int heads) {
  const int64_t hd = C / heads;
  auto m = make_map(static_cast<size_t>(n_windows * N * C));
  for (int64_t w = 0; w < n_windows; ++w)
    for (int64_t n = 0; n < N; ++n)
      for (int h = 0; h < heads; ++h)
        for (int64_t d = 0; d < hd; ++d)
          m->push_back(((w * heads + h) * N + n) * hd + d);
  return m;
}

// Relative position bias: expand table [(2w-1)^2, heads] to
// [nW*heads, N, N]. Effective windows never exceed the configured side, so
// table addressing always uses the configured stride.
inline Map relative_bias(int64_t n_windows, int heads, const WindowPlan& p,
                         int config_window) {
  const int64_t N = p.window_len;
  const int64_t stride = 2 * config_window - 1;
  auto m = make_map(static_cast<size_t>(n_windows * heads * N * N));
  for (int64_t w = 0; w < n_windows; ++w)
    for (int h = 0; h < heads; ++h)
      for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < N; ++j) {
          const int64_t dy = i / p.ww - j / p.ww + config_window - 1;
          const int64_t dx = i % p.ww - j % p.ww + config_window - 1;
          m->push_back((dy * stride + dx) * heads + h);
        }
  return m;
}

// Expand [nW, N, N] mask to the [nW*heads, N, N] batch layout.
inline Map repeat_mask(int64_t n_windows, int heads, int64_t N) {
  auto m = make_map(static_cast<size_t>(n_windows * heads * N * N));
  for (int64_t w = 0; w < n_windows; ++w)
    for (int h = 0; h < heads; ++h)
      for (int64_t e = 0; e < N * N; ++e) m->push_back(w * N * N + e);
  return m;
}

// 2x2 neighborhood concat: [H*W, C] -> [(H/2)*(W/2), 4C].
inline Map merge_unfold(int64_t H, int64_t W, int64_t C) {
  auto m = make_map(static_cast<size_t>(H * W * C));
  static constexpr int dy[4] = {0, 1, 0, 1};
  static constexpr int dx[4] = {0, 0, 1, 1};
  for (int64_t i = 0; i < H / 2; ++i)
    for (int64_t j = 0; j < W / 2; ++j)
      for (int q = 0; q < 4; ++q)
        for (int64_t c = 0; c < C; ++c)
          m->push_back(((2 * i + dy[q]) * W + 2 * j + dx[q]) * C + c);
  return m;
}

// im2col for the k x k token-semantic conv. Time axis replicate-padded (keeps
// constant-in-time inputs constant), frequency axis zero-padded.
inline Map conv_unfold(int64_t H, int64_t W, int64_t C, int k) {
  const int r = k / 2;
  auto m = make_map(static_cast<size_t>(H * W * k * k * C));
  for (int64_t i = 0; i < H; ++i)
    for (int64_t j = 0; j < W; ++j)
      for (int di = -r; di <= r; ++di)
        for (int dj = -r; dj <= r; ++dj) {
          int64_t si = i + di;
          si = si < 0 ? 0 : (si >= H ? H - 1 : si);
          const int64_t sj = j + dj;
          const bool valid = sj >= 0 && sj < W;
          for (int64_t c = 0; c < C; ++c)
            m->push_back(valid ? (si * W + sj) * C + c : -1);
        }
  return m;
}

// Row-stochastic linear interpolation matrix [T_out, T_in].
inline nn::Tensor interp_matrix(int64_t T_out, int64_t T_in) {
  nn::Tensor m({T_out, T_in});
  for (int64_t t = 0; t < T_out; ++t) {
    double pos = (static_cast<double>(t) + 0.5) * T_in / T_out - 0.5;
    if (pos < 0) pos = 0;
    if (pos > static_cast<double>(T_in - 1)) pos = static_cast<double>(T_in - 1);
    const auto i0 = static_cast<int64_t>(pos);
    const int64_t i1 = std::min(i0 + 1, T_in - 1);
    const double frac = pos - static_cast<double>(i0);
    m.at2(t, i0) += 1.0 - frac;
    m.at2(t, i1) += frac;
  }
  return m;
}

}  // namespace model_detail

// Multi-task model: patch embedding, four windowed-attention groups with
// patch merging after the first three, then the two task heads.
class AudioLogModel {
 public:
  AudioLogModel() = default;

  AudioLogModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    nn::Rng rng(seed);
    auto weight = [&](const std::string& name, std::vector<int64_t> shape) {
      nn::Tensor t(std::move(shape));
      rng.fill_trunc_normal(t, 0.02);
      params_[name] = nn::parameter(std::move(t), name);
    };
    auto zeros = [&](const std::string& name, std::vector<int64_t> shape) {
      params_[name] = nn::parameter(nn::Tensor(std::move(shape)), name);
    };
    auto ones = [&](const std::string& name, std::vector<int64_t> shape) {
      params_[name] = nn::parameter(nn::Tensor::full(std::move(shape), 1.0), name);
    };

    const int P = cfg_.patch_size;
    weight("patch_embed.weight", {static_cast<int64_t>(P) * P, cfg_.dim});
    zeros("patch_embed.bias", {cfg_.dim});

    const int64_t bias_rows =
        static_cast<int64_t>(2 * cfg_.window - 1) * (2 * cfg_.window - 1);
    for (int g = 0; g < ModelConfig::kGroups; ++g) {
      const int64_t C = cfg_.group_dim(g);
      const auto hidden = static_cast<int64_t>(C * cfg_.mlp_ratio);
      for (int b = 0; b < cfg_.depths[g]; ++b) {
        const std::string pre =
            "g" + std::to_string(g) + ".b" + std::to_string(b) + ".";
        ones(pre + "norm1.gamma", {C});
        zeros(pre + "norm1.beta", {C});
        weight(pre + "attn.qkv.weight", {C, 3 * C});
        zeros(pre + "attn.qkv.bias", {3 * C});
        weight(pre + "attn.rel_bias", {bias_rows, cfg_.heads[g]});
        weight(pre + "attn.proj.weight", {C, C});
        zeros(pre + "attn.proj.bias", {C});
        ones(pre + "norm2.gamma", {C});
        zeros(pre + "norm2.beta", {C});
        weight(pre + "mlp.fc1.weight", {C, hidden});
        zeros(pre + "mlp.fc1.bias", {hidden});
        weight(pre + "mlp.fc2.weight", {hidden, C});
        zeros(pre + "mlp.fc2.bias", {C});
      }
      if (g < ModelConfig::kMerges) {
        const std::string pre = "g" + std::to_string(g) + ".merge.";
        ones(pre + "norm.gamma", {4 * C});
        zeros(pre + "norm.beta", {4 * C});
        weight(pre + "weight", {4 * C, 2 * C});
      }
    }

    const int64_t Cout = cfg_.out_dim();
    ones("norm_final.gamma", {Cout});
    zeros("norm_final.beta", {Cout});
    const int64_t k = cfg_.sed_kernel;
    weight("sed.conv.weight", {k * k * Cout, cfg_.num_events});
    zeros("sed.conv.bias", {cfg_.num_events});
    weight("scene.fc.weight", {Cout, cfg_.num_scenes});
    zeros("scene.fc.bias", {cfg_.num_scenes});
  }

  const ModelConfig& config() const { return cfg_; }
  std::map<std::string, nn::Var>& params() { return params_; }
  const std::map<std::string, nn::Var>& params() const { return params_; }

  const nn::Var& p(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
      throw ConfigError("model: unknown parameter " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [name, v] : params_) v->zero_grad();
  }

  void set_train(bool on) { train_ = on; }
  bool training() const { return train_; }
  void seed_dropout(uint64_t seed) { dropout_rng_ = nn::Rng(seed); }

  // [T, F] spectrogram values -> patch token grid [(T/P)(F/P), D].
  nn::Var patch_embed(const nn::Var& spec) const {
    const int P = cfg_.patch_size;
    const int64_t T = spec->value.shape[0], F = spec->value.shape[1];
    if (T % P != 0 || F % P != 0)
      throw ShapeMismatch("patch_embed: grid " + spec->value.shape_str() +
                          " not divisible by patch size " + std::to_string(P));
    auto patches = nn::gather(spec, model_detail::patch_unfold(T, F, P),
                              {(T / P) * (F / P), static_cast<int64_t>(P) * P});
    return nn::add_bias(nn::matmul(patches, p("patch_embed.weight")),
                        p("patch_embed.bias"));
  }

  nn::Var window_attention(const nn::Var& x, int64_t H, int64_t W, int group,
                           int block, bool shifted) const {
    namespace md = model_detail;
    const std::string pre =
        "g" + std::to_string(group) + ".b" + std::to_string(block) + ".attn.";
    const int64_t C = cfg_.group_dim(group);
    const int heads = cfg_.heads[group];
    const int64_t hd = C / heads;
    const auto plan = md::WindowPlan::plan(H, W, cfg_.window, shifted);
    const int64_t nW = plan.n_windows, N = plan.window_len;

    auto xw = nn::gather(x, md::window_partition(H, W, C, plan), {nW * N, C});
    auto qkv = nn::add_bias(nn::matmul(xw, p(pre + "qkv.weight")),
                            p(pre + "qkv.bias"));
    auto q = nn::gather(qkv, md::split_heads(nW, N, C, heads, 0),
                        {nW * heads, N, hd});
    auto k = nn::gather(qkv, md::split_heads(nW, N, C, heads, 1),
                        {nW * heads, N, hd});
    auto v = nn::gather(qkv, md::split_heads(nW, N, C, heads, 2),
                        {nW * heads, N, hd});
    q = nn::scale(q, 1.0 / std::sqrt(static_cast<double>(hd)));
    auto kt = nn::gather(k, nn::idx::transpose_last2(nW * heads, N, hd),
                         {nW * heads, hd, N});
    auto scores = nn::bmm(q, kt);
    scores = nn::add(scores,
                     nn::gather(p(pre + "rel_bias"),
                                md::relative_bias(nW, heads, plan, cfg_.window),
                                {nW * heads, N, N}));
    if (plan.needs_mask(H, W)) {
      auto mask = nn::constant(md::attention_mask(H, W, plan));
      scores = nn::add(
          scores, nn::gather(mask, md::repeat_mask(nW, heads, N),
                             {nW * heads, N, N}));
    }
    auto ctx = nn::bmm(nn::softmax_lastdim(scores), v);
    auto merged =
        nn::gather(ctx, md::merge_heads(nW, N, C, heads), {nW * N, C});
    auto projected = nn::add_bias(nn::matmul(merged, p(pre + "proj.weight")),
                                  p(pre + "proj.bias"));
    return nn::gather(projected, md::window_departition(H, W, C, plan),
                      {H * W, C});
  }

  nn::Var swin_block(const nn::Var& x, int64_t H, int64_t W, int group,
                     int block) const {
    const std::string pre =
        "g" + std::to_string(group) + ".b" + std::to_string(block) + ".";
    const bool shifted = block % 2 == 1;  // alternate regular/shifted
    auto attned = window_attention(
        nn::layer_norm(x, p(pre + "norm1.gamma"), p(pre + "norm1.beta")), H, W,
        group, block, shifted);
    auto y = nn::add(x, maybe_dropout(attned));
    auto h = nn::add_bias(
        nn::matmul(nn::layer_norm(y, p(pre + "norm2.gamma"),
                                  p(pre + "norm2.beta")),
                   p(pre + "mlp.fc1.weight")),
        p(pre + "mlp.fc1.bias"));
    auto mlp_out = nn::add_bias(
        nn::matmul(nn::vgelu(h), p(pre + "mlp.fc2.weight")),
        p(pre + "mlp.fc2.bias"));
    return nn::add(y, maybe_dropout(mlp_out));
  }

  // One group: depths[g] blocks, then (for the first three groups) a 2x2
  // patch merge halving each spatial dim and doubling channels.
  std::tuple<nn::Var, int64_t, int64_t> swin_group(const nn::Var& x, int64_t H,
                                                   int64_t W, int group) const {
    namespace md = model_detail;
    nn::Var y = x;
    for (int b = 0; b < cfg_.depths[group]; ++b)
      y = swin_block(y, H, W, group, b);
    if (group >= ModelConfig::kMerges) return {y, H, W};
    if (H % 2 != 0 || W % 2 != 0)
      throw ShapeMismatch("swin_group: merge requires even grid dims, got " +
                          std::to_string(H) + "x" + std::to_string(W));
    const int64_t C = cfg_.group_dim(group);
    const std::string pre = "g" + std::to_string(group) + ".merge.";
    auto cat = nn::gather(y, md::merge_unfold(H, W, C),
                          {(H / 2) * (W / 2), 4 * C});
    auto merged = nn::matmul(
        nn::layer_norm(cat, p(pre + "norm.gamma"), p(pre + "norm.beta")),
        p(pre + "weight"));
    return {merged, H / 2, W / 2};
  }

  // Patch tokens -> encoder tokens; spatial dims shrink by exactly 8.
  std::tuple<nn::Var, int64_t, int64_t> encode(const nn::Var& tokens,
                                               int64_t grid_t,
                                               int64_t grid_f) const {
    const int64_t merge_span = 1 << ModelConfig::kMerges;
    if (grid_t % merge_span != 0 || grid_f % merge_span != 0)
      throw ShapeMismatch("encode: grid dims must be divisible by 8");
    nn::Var y = tokens;
    int64_t H = grid_t, W = grid_f;
    for (int g = 0; g < ModelConfig::kGroups; ++g)
      std::tie(y, H, W) = swin_group(y, H, W, g);
    y = nn::layer_norm(y, p("norm_final.gamma"), p("norm_final.beta"));
    return {y, H, W};
  }

  // Token-semantic conv head: k x k conv to event classes, mean over the
  // frequency axis, linear time interpolation to frames, logits out.
  nn::Var token_semantic_logits(const nn::Var& enc, int64_t H, int64_t W,
                                int64_t frames_out) const {
    namespace md = model_detail;
    const int64_t C = cfg_.out_dim();
    const int k = cfg_.sed_kernel;
    auto cols = nn::gather(enc, md::conv_unfold(H, W, C, k),
                           {H * W, static_cast<int64_t>(k) * k * C});
    auto grid = nn::add_bias(nn::matmul(cols, p("sed.conv.weight")),
                             p("sed.conv.bias"));
    auto over_time =
        nn::reduce_mean_axis(nn::reshape(grid, {H, W, cfg_.num_events}), 1);
    return nn::matmul(nn::constant(md::interp_matrix(frames_out, H)),
                      over_time);
  }

  // As above with the sigmoid applied: framewise event probabilities.
  nn::Tensor token_semantic_head(const nn::Var& enc, int64_t H, int64_t W,
                                 int64_t frames_out) const {
    nn::Tensor probs = token_semantic_logits(enc, H, W, frames_out)->value;
    for (double& v : probs.data)
      v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return probs;
  }

  // Global average pooling over all tokens followed by one linear layer.
  nn::Var scene_logits(const nn::Var& enc) const {
    auto pooled = nn::reshape(nn::reduce_mean_axis(enc, 0),
                              {1, cfg_.out_dim()});
    auto logits = nn::add_bias(nn::matmul(pooled, p("scene.fc.weight")),
                               p("scene.fc.bias"));
    return nn::reshape(logits, {cfg_.num_scenes});
  }

  struct Graph {
    nn::Var sed_logits;    // [T', K_e]
    nn::Var scene_logits;  // [K_s]
  };

  // Full differentiable forward. The spectrogram must already be padded so T
  // and F are multiples of 8 * patch_size.
  Graph forward_graph(const LogMelSpectrogram& spec) const {
    const int64_t T = spec.frames(), F = spec.bins();
    const int align = cfg_.alignment();
    if (T == 0 || F == 0) throw EmptyClip("forward: empty spectrogram");
    if (T % align != 0 || F % align != 0)
      throw ShapeMismatch("forward: spectrogram " + spec.values.shape_str() +
                          " not aligned to " + std::to_string(align) +
                          "; run pad_to_patch_multiple first");
    auto input = nn::constant(spec.values);
    auto tokens = patch_embed(input);
    auto [enc, H, W] = encode(tokens, T / cfg_.patch_size, F / cfg_.patch_size);
    Graph g;
    g.sed_logits = token_semantic_logits(enc, H, W, T);
    g.scene_logits = scene_logits(enc);
    return g;
  }

  // Inference entry point: no tape, sigmoid applied to the event logits.
  Predictions forward(const LogMelSpectrogram& spec) const {
    nn::NoGradGuard no_grad;
    Graph g = forward_graph(spec);
    Predictions out;
    out.sed_probs = g.sed_logits->value;
    for (double& v : out.sed_probs.data)
      v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    out.scene_logits = g.scene_logits->value;
    return out;
  }

  nn::Var loss_graph(const Graph& g, const Targets& tgt) const {
    return loss_graph(g, tgt, cfg_.alpha);
  }

  // Joint training loss on the graph outputs. The SED term is BCE evaluated
  // from logits (softplus form); the scene term is categorical CE.
  nn::Var loss_graph(const Graph& g, const Targets& tgt, double alpha) const {
    if (!g.sed_logits->value.same_shape(tgt.sed))
      throw ShapeMismatch("loss: SED target shape " + tgt.sed.shape_str() +
                          " != prediction " + g.sed_logits->value.shape_str());
    if (tgt.scene < 0 || tgt.scene >= cfg_.num_scenes)
      throw ShapeMismatch("loss: scene target out of range");
    auto targets = nn::constant(tgt.sed);
    auto sed = nn::reduce_mean_all(
        nn::sub(nn::vsoftplus(g.sed_logits), nn::mul(targets, g.sed_logits)));
    const auto& sl = g.scene_logits->value;
    double mx = sl[0];
    for (int64_t i = 1; i < sl.numel(); ++i) mx = std::max(mx, sl[i]);
    auto shifted = nn::add_scalar(g.scene_logits, -mx);
    auto lse = nn::vlog(nn::reduce_sum_all(nn::vexp(shifted)));
    auto picked = nn::gather(
        shifted,
        std::make_shared<std::vector<int64_t>>(
            std::vector<int64_t>{tgt.scene}),
        {1});
    auto scene = nn::sub(lse, picked);
    return nn::add(sed, nn::scale(scene, alpha));
  }

 private:
  nn::Var maybe_dropout(const nn::Var& x) const {
    if (!train_ || cfg_.dropout <= 0.0) return x;
    return nn::dropout(x, cfg_.dropout, dropout_rng_);
  }

  ModelConfig cfg_;
  std::map<std::string, nn::Var> params_;
  bool train_ = false;
  mutable nn::Rng dropout_rng_{0x5eed};
};

}  // namespace audiolog
