#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "omgsr/nn.hpp"
#include "omgsr/rng.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr {

template <typename S>
struct ModelConfig {
  int latent_channels = 4;
  int downsample_factor = 4;  // fixed by the two stride-2 encoder stages
  int vae_channels = 16;
  int denoiser_channels = 24;
  int denoiser_blocks = 2;
  int t_embed_dim = 16;
  int conditioning_dim = 8;
  int disc_channels = 16;
  int disc_native_input = 224;
  int embedder_channels = 8;
  std::uint64_t embedder_seed = 2024;  // fixed-weight perceptual pyramid
};

namespace detail {

template <typename S>
nn::Vec<S> sinusoidal_embedding(int t, int dim) {
  nn::Vec<S> e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double w = std::exp(-std::log(10000.0) * i / half);
    e[2 * i] = static_cast<S>(std::sin(t * w));
    e[2 * i + 1] = static_cast<S>(std::cos(t * w));
  }
  return e;
}

template <typename S>
void add_channel_bias(Tensor<S>& x, const nn::Vec<S>& bias) {
  const Eigen::Index plane = static_cast<Eigen::Index>(x.height) * x.width;
  for (int c = 0; c < x.channels; ++c)
    x.data.segment(c * plane, plane) += bias[c];
}

template <typename S>
nn::Vec<S> channel_bias_grad(const Tensor<S>& gy) {
  nn::Vec<S> g(gy.channels);
  const Eigen::Index plane = static_cast<Eigen::Index>(gy.height) * gy.width;
  for (int c = 0; c < gy.channels; ++c)
    g[c] = gy.data.segment(c * plane, plane).sum();
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Toy VAE: two stride-2 conv stages down, mirrored nearest-upsample stages
// back, tanh output in [-1, 1]. Mean head only; encoding is deterministic.
// ---------------------------------------------------------------------------
template <typename S>
class VaeModel {
 public:
  VaeModel() = default;
  VaeModel(const ModelConfig<S>& cfg, Rng& rng) : cfg_(cfg) {
    const int b = cfg.vae_channels;
    enc1_ = nn::Conv2d<S>(3, b, 3, 2, rng);
    enc2_ = nn::Conv2d<S>(b, 2 * b, 3, 2, rng);
    enc3_ = nn::Conv2d<S>(2 * b, cfg.latent_channels, 3, 1, rng);
    dec1_ = nn::Conv2d<S>(cfg.latent_channels, 2 * b, 3, 1, rng);
    dec2_ = nn::Conv2d<S>(2 * b, b, 3, 1, rng);
    dec3_ = nn::Conv2d<S>(b, 3, 3, 1, rng);
  }

  int downsample_factor() const { return cfg_.downsample_factor; }
  int latent_channels() const { return cfg_.latent_channels; }

  // Fixed multiplier normalizing latents toward unit variance so they live on
  // the same scale as the schedule's unit Gaussian noise. Set once after VAE
  // pre-training from measured latent statistics; 1 until then.
  S latent_scale() const { return latent_scale_; }
  void set_latent_scale(S s) {
    if (!(s > S(0)))
      throw std::invalid_argument("set_latent_scale: scale must be positive");
    latent_scale_ = s;
  }

  mutable long encode_calls = 0;
  mutable long decode_calls = 0;

  Tensor<S> encode(const Tensor<S>& image, bool use_adapter, bool keep_cache = false) {
    if (image.channels != 3)
      throw std::invalid_argument("encode: expected a 3-channel image");
    if (image.height % cfg_.downsample_factor != 0 ||
        image.width % cfg_.downsample_factor != 0)
      throw std::invalid_argument("encode: image dims not divisible by the VAE factor");
    ++encode_calls;
    set_adapter(use_adapter);
    auto h1 = enc_r1_.forward(enc1_.forward(image, keep_cache));
    auto h2 = enc_r2_.forward(enc2_.forward(h1, keep_cache));
    auto z = enc3_.forward(h2, keep_cache);
    z.data *= latent_scale_;
    return z;
  }

  // Backward through the encoder path cached by the last encode(...,
  // keep_cache=true). Returns nothing; the encoder input gradient is not
  // needed by any caller.
  void encode_backward(const Tensor<S>& g_latent) {
    Tensor<S> g = g_latent.like_zeros();
    g.data = latent_scale_ * g_latent.data;
    auto g2 = enc_r2_.backward(enc3_.backward(g, true));
    auto g1 = enc_r1_.backward(enc2_.backward(g2, true));
    enc1_.backward(g1, false);
  }

  Tensor<S> decode(const Tensor<S>& latent, bool keep_cache = false) {
    if (latent.channels != cfg_.latent_channels)
      throw std::invalid_argument("decode: latent channel mismatch");
    ++decode_calls;
    Tensor<S> z = latent.like_zeros();
    z.data = latent.data / latent_scale_;
    auto h1 = dec_r1_.forward(dec1_.forward(z, keep_cache));
    auto h2 = dec_r2_.forward(dec2_.forward(dec_u1_.forward(h1), keep_cache));
    return dec_tanh_.forward(dec3_.forward(dec_u2_.forward(h2), keep_cache));
  }

  Tensor<S> decode_backward(const Tensor<S>& g_image, bool need_input_grad = true) {
    auto g = dec_u2_.backward(dec3_.backward(dec_tanh_.backward(g_image), true));
    g = dec_u1_.backward(dec2_.backward(dec_r2_.backward(g), true));
    auto g_in = dec1_.backward(dec_r1_.backward(g), need_input_grad);
    if (need_input_grad) g_in.data /= latent_scale_;
    return g_in;
  }

  std::map<std::string, nn::Conv2d<S>*> conv_targets() {
    return {{"enc1", &enc1_}, {"enc2", &enc2_}, {"enc3", &enc3_},
            {"dec1", &dec1_}, {"dec2", &dec2_}, {"dec3", &dec3_}};
  }

  std::vector<nn::ParamRef<S>> params(const std::string& prefix) {
    std::vector<nn::ParamRef<S>> out;
    enc1_.collect(out, prefix + ".enc1");
    enc2_.collect(out, prefix + ".enc2");
    enc3_.collect(out, prefix + ".enc3");
    dec1_.collect(out, prefix + ".dec1");
    dec2_.collect(out, prefix + ".dec2");
    dec3_.collect(out, prefix + ".dec3");
    return out;
  }

  std::vector<nn::ParamRef<S>> encoder_lora_params(const std::string& prefix) {
    std::vector<nn::ParamRef<S>> all = params(prefix);
    std::vector<nn::ParamRef<S>> out;
    for (auto& r : all)
      if (r.name.find(".lora_") != std::string::npos &&
          r.name.find(".enc") != std::string::npos)
        out.push_back(r);
    return out;
  }

  bool has_adapter() const { return enc1_.lora_active || enc2_.lora_active || enc3_.lora_active; }

 private:
  void set_adapter(bool on) {
    // LoRA lives on the encoder only; toggling routes through E_adapter or
    // the frozen E without touching parameters.
    for (auto* c : {&enc1_, &enc2_, &enc3_})
      if (c->lora_rank() > 0) c->lora_active = on;
  }

  ModelConfig<S> cfg_;
  S latent_scale_ = S(1);
  nn::Conv2d<S> enc1_, enc2_, enc3_, dec1_, dec2_, dec3_;
  nn::ReLU<S> enc_r1_, enc_r2_, dec_r1_, dec_r2_;
  nn::UpsampleNearest2<S> dec_u1_, dec_u2_;
  nn::Tanh<S> dec_tanh_;
};

// ---------------------------------------------------------------------------
// Toy denoiser: residual conv stack with sinusoidal step embedding and a
// learned fixed-prompt condition vector, both injected as channel biases.
// Final conv zero-initialized so the initial prediction is zero.
// ---------------------------------------------------------------------------
template <typename S>
class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(const ModelConfig<S>& cfg, Rng& rng) : cfg_(cfg) {
    const int C = cfg.denoiser_channels;
    conv_in_ = nn::Conv2d<S>(cfg.latent_channels, C, 3, 1, rng);
    conv_out_ = nn::Conv2d<S>(C, cfg.latent_channels, 3, 1, rng, /*zero_init=*/true);
    t_lin_ = nn::Linear<S>(cfg.t_embed_dim, C, rng);
    c_lin_ = nn::Linear<S>(cfg.conditioning_dim, C, rng);
    cond_.resize(cfg.conditioning_dim);
    for (Eigen::Index i = 0; i < cond_.v.size(); ++i)
      cond_.v[i] = static_cast<S>(rng.normal() * 0.1);
    blocks_.resize(cfg.denoiser_blocks);
    for (auto& b : blocks_) {
      b.conv1 = nn::Conv2d<S>(C, C, 3, 1, rng);
      b.conv2 = nn::Conv2d<S>(C, C, 3, 1, rng);
    }
  }

  mutable long calls = 0;
  int max_step() const { return max_step_; }
  void set_max_step(int t) { max_step_ = t; }

  Tensor<S> forward(const Tensor<S>& z, int t, bool keep_cache = false) {
    if (z.channels != cfg_.latent_channels)
      throw std::invalid_argument("denoise: latent channel mismatch");
    if (t < 0 || t > max_step_)
      throw std::out_of_range("denoise: step index out of schedule range");
    ++calls;
    temb_ = t_lin_.forward(detail::sinusoidal_embedding<S>(t, cfg_.t_embed_dim));
    cemb_ = c_lin_.forward(cond_.v);
    auto h = relu_in_.forward(conv_in_.forward(z, keep_cache));
    for (auto& b : blocks_) {
      Tensor<S> pre = h;
      detail::add_channel_bias(pre, temb_);
      detail::add_channel_bias(pre, cemb_);
      auto a = b.relu1.forward(pre);
      auto mid = b.relu2.forward(b.conv1.forward(a, keep_cache));
      auto d = b.conv2.forward(mid, keep_cache);
      h.data += d.data;  // residual
    }
    return conv_out_.forward(h, keep_cache);
  }

  // Backward for the last cached forward; accumulates into trainable params
  // (including the condition vector) and returns grad wrt the input latent.
  Tensor<S> backward(const Tensor<S>& g_out) {
    Tensor<S> gh = conv_out_.backward(g_out, true);
    nn::Vec<S> g_temb = nn::Vec<S>::Zero(cfg_.denoiser_channels);
    nn::Vec<S> g_cemb = nn::Vec<S>::Zero(cfg_.denoiser_channels);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      auto& b = *it;
      Tensor<S> gd = gh;  // residual branch grad
      auto gmid = b.relu2.backward(b.conv2.backward(gd, true));
      auto ga = b.conv1.backward(gmid, true);
      auto gpre = b.relu1.backward(ga);
      g_temb += detail::channel_bias_grad(gpre);
      g_cemb += detail::channel_bias_grad(gpre);
      gh.data += gpre.data;  // skip connection
    }
    t_lin_.backward(g_temb, false);
    auto g_cond = c_lin_.backward(g_cemb, true);
    if (cond_.trainable) cond_.g += g_cond;
    return conv_in_.backward(relu_in_.backward(gh), true);
  }

  std::map<std::string, nn::Conv2d<S>*> conv_targets() {
    std::map<std::string, nn::Conv2d<S>*> m{{"conv_in", &conv_in_}, {"conv_out", &conv_out_}};
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      m["block" + std::to_string(i) + ".conv1"] = &blocks_[i].conv1;
      m["block" + std::to_string(i) + ".conv2"] = &blocks_[i].conv2;
    }
    return m;
  }

  std::vector<nn::ParamRef<S>> params(const std::string& prefix) {
    std::vector<nn::ParamRef<S>> out;
    conv_in_.collect(out, prefix + ".conv_in");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string b = prefix + ".block" + std::to_string(i);
      blocks_[i].conv1.collect(out, b + ".conv1");
      blocks_[i].conv2.collect(out, b + ".conv2");
    }
    conv_out_.collect(out, prefix + ".conv_out");
    t_lin_.collect(out, prefix + ".t_lin");
    c_lin_.collect(out, prefix + ".c_lin");
    out.push_back({prefix + ".cond", &cond_});
    return out;
  }

  std::vector<nn::ParamRef<S>> lora_params(const std::string& prefix) {
    std::vector<nn::ParamRef<S>> all = params(prefix);
    std::vector<nn::ParamRef<S>> out;
    for (auto& r : all)
      if (r.name.find(".lora_") != std::string::npos || r.name.ends_with(".cond"))
        out.push_back(r);
    return out;
  }

  nn::Param<S>& condition() { return cond_; }

 private:
  struct Block {
    nn::Conv2d<S> conv1, conv2;
    nn::ReLU<S> relu1, relu2;
  };

  ModelConfig<S> cfg_;
  int max_step_ = 999;
  nn::Conv2d<S> conv_in_, conv_out_;
  nn::ReLU<S> relu_in_;
  nn::Linear<S> t_lin_, c_lin_;
  nn::Param<S> cond_;
  std::vector<Block> blocks_;
  nn::Vec<S> temb_, cemb_;
};

// ---------------------------------------------------------------------------
// Patch-embedding discriminator: patchify conv, conv, global mean pool,
// realness head. Output strictly inside (0,1).
// ---------------------------------------------------------------------------
template <typename S>
class Discriminator {
 public:
  static constexpr S kProbClamp = static_cast<S>(1e-6);

  Discriminator() = default;
  Discriminator(const ModelConfig<S>& cfg, Rng& rng) : cfg_(cfg) {
    const int d = cfg.disc_channels;
    conv1_ = nn::Conv2d<S>(3, d, 8, 8, rng);
    conv2_ = nn::Conv2d<S>(d, 2 * d, 3, 2, rng);
    head_ = nn::Linear<S>(2 * d, 1, rng);
  }

  int native_input() const { return cfg_.disc_native_input; }

  // Realness probability for one patch, clamped to [1e-6, 1-1e-6].
  S forward(const Tensor<S>& patch, bool keep_cache = false) {
    auto h = r1_.forward(conv1_.forward(patch, keep_cache));
    feat_ = r2_.forward(conv2_.forward(h, keep_cache));
    pooled_ = nn::Vec<S>(feat_.channels);
    const Eigen::Index plane = static_cast<Eigen::Index>(feat_.height) * feat_.width;
    for (int c = 0; c < feat_.channels; ++c)
      pooled_[c] = feat_.data.segment(c * plane, plane).mean();
    const S logit = head_.forward(pooled_)[0];
    prob_ = S(1) / (S(1) + std::exp(-logit));
    const S lo = kProbClamp, hi = S(1) - kProbClamp;
    prob_ = std::min(hi, std::max(lo, prob_));
    return prob_;
  }

  // d(loss)/d(prob) in, grad wrt the input patch out (cached forward).
  // Parameter gradients accumulate only when accumulate_params is set, so
  // the generator update can flow through a frozen discriminator.
  Tensor<S> backward(S g_prob, bool accumulate_params, bool need_input_grad) {
    const S g_logit = g_prob * prob_ * (S(1) - prob_);
    const bool w_train = head_.weight.trainable;
    if (!accumulate_params) set_trainable(false);
    nn::Vec<S> gv(1);
    gv[0] = g_logit;
    auto g_pool = head_.backward(gv, true);
    Tensor<S> g_feat = feat_.like_zeros();
    const Eigen::Index plane = static_cast<Eigen::Index>(feat_.height) * feat_.width;
    for (int c = 0; c < feat_.channels; ++c)
      g_feat.data.segment(c * plane, plane).setConstant(g_pool[c] / static_cast<S>(plane));
    auto g1 = r1_.backward(conv2_.backward(r2_.backward(g_feat), true));
    Tensor<S> gx = conv1_.backward(g1, need_input_grad);
    if (!accumulate_params) set_trainable(w_train);
    return gx;
  }

  std::vector<nn::ParamRef<S>> params(const std::string& prefix) {
    std::vector<nn::ParamRef<S>> out;
    conv1_.collect(out, prefix + ".conv1");
    conv2_.collect(out, prefix + ".conv2");
    head_.collect(out, prefix + ".head");
    return out;
  }

 private:
  void set_trainable(bool on) {
    for (auto ref : params("d")) ref.p->trainable = on;
  }

  ModelConfig<S> cfg_;
  nn::Conv2d<S> conv1_, conv2_;
  nn::ReLU<S> r1_, r2_;
  nn::Linear<S> head_;
  Tensor<S> feat_;
  nn::Vec<S> pooled_;
  S prob_ = S(0.5);
};

// ---------------------------------------------------------------------------
// Fixed-weight convolutional feature pyramid standing in for the LPIPS
// backbone. Weights come from a documented seed and are never trained.
// ---------------------------------------------------------------------------
template <typename S>
class PerceptualEmbedder {
 public:
  PerceptualEmbedder() : PerceptualEmbedder(ModelConfig<S>{}) {}
  explicit PerceptualEmbedder(const ModelConfig<S>& cfg) {
    Rng rng(cfg.embedder_seed);
    const int e = cfg.embedder_channels;
    conv1_ = nn::Conv2d<S>(3, e, 5, 2, rng);
    conv2_ = nn::Conv2d<S>(e, 2 * e, 3, 2, rng);
    conv3_ = nn::Conv2d<S>(2 * e, 2 * e, 3, 2, rng);
    for (auto ref : params()) ref.p->trainable = false;
  }

  static constexpr int kLayers = 3;

  std::vector<Tensor<S>> forward(const Tensor<S>& image, bool keep_cache = false) {
    std::vector<Tensor<S>> feats;
    feats.push_back(r1_.forward(conv1_.forward(image, keep_cache)));
    feats.push_back(r2_.forward(conv2_.forward(feats[0], keep_cache)));
    feats.push_back(conv3_.forward(feats[1], keep_cache));
    for (const auto& f : feats)
      if (!f.all_finite())
        throw std::runtime_error("PerceptualEmbedder: non-finite features");
    return feats;
  }

  // Pull per-layer feature gradients back to the input image.
  Tensor<S> backward(const std::vector<Tensor<S>>& g_feats) {
    auto g2 = conv3_.backward(g_feats[2], true);
    g2.data += g_feats[1].data;
    auto g1 = conv2_.backward(r2_.backward(g2), true);
    g1.data += g_feats[0].data;
    return conv1_.backward(r1_.backward(g1), true);
  }

  std::vector<nn::ParamRef<S>> params() {
    std::vector<nn::ParamRef<S>> out;
    conv1_.collect(out, "embedder.conv1");
    conv2_.collect(out, "embedder.conv2");
    conv3_.collect(out, "embedder.conv3");
    return out;
  }

 private:
  nn::Conv2d<S> conv1_, conv2_, conv3_;
  nn::ReLU<S> r1_, r2_;
};

// ---------------------------------------------------------------------------
// LoRA injection over named conv targets of a model.
// ---------------------------------------------------------------------------
template <typename S, typename Model>
void inject_lora(Model& model, const std::vector<std::string>& targets, int rank,
                 S scale, Rng& rng) {
  auto available = model.conv_targets();
  for (const auto& name : targets) {
    auto it = available.find(name);
    if (it == available.end())
      throw std::invalid_argument("inject_lora: unknown target '" + name + "'");
    it->second->enable_lora(rank, scale, rng);
  }
}

template <typename S, typename Model>
void inject_lora_all(Model& model, int rank, S scale, Rng& rng) {
  std::vector<std::string> names;
  for (auto& [name, conv] : model.conv_targets()) names.push_back(name);
  inject_lora(model, names, rank, scale, rng);
}

}  // namespace omgsr
