#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "omgsr/rng.hpp"
#include "omgsr/tensor.hpp"

namespace omgsr::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
struct Param {
  Vec<S> v;  // value
  Vec<S> g;  // accumulated gradient
  Vec<S> m;  // AdamW first moment (lazily sized)
  Vec<S> s;  // AdamW second moment
  bool trainable = true;

  void resize(Eigen::Index n) {
    v = Vec<S>::Zero(n);
    g = Vec<S>::Zero(n);
  }
  void zero_grad() { g.setZero(); }
};

template <typename S>
struct ParamRef {
  std::string name;
  Param<S>* p;
};

// ---------------------------------------------------------------------------
// Conv2d with square kernel, "same"-style zero padding, optional stride and
// an optional LoRA pair (base frozen, delta = scale * B * A on the flattened
// kernel matrix). im2col + GEMM on both passes.
// ---------------------------------------------------------------------------
template <typename S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_c, int out_c, int k, int stride, Rng& rng, bool zero_init = false)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_((k - 1) / 2) {
    weight.resize(static_cast<Eigen::Index>(out_c) * in_c * k * k);
    bias.resize(out_c);
    if (!zero_init) {
      const double std = std::sqrt(2.0 / (in_c * k * k));
      for (Eigen::Index i = 0; i < weight.v.size(); ++i)
        weight.v[i] = static_cast<S>(rng.normal() * std);
    }
  }

  Param<S> weight;  // out_c x (in_c*k*k), row-major rows
  Param<S> bias;
  Param<S> lora_a;  // rank x (in_c*k*k)
  Param<S> lora_b;  // out_c x rank
  bool lora_active = false;

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int kernel() const { return k_; }
  Eigen::Index base_param_count() const { return weight.v.size() + bias.v.size(); }

  void enable_lora(int rank, S scale, Rng& rng) {
    const int fan_in = in_c_ * k_ * k_;
    if (rank <= 0 || rank > std::min(out_c_, fan_in))
      throw std::invalid_argument("enable_lora: rank exceeds map dimension");
    lora_rank_ = rank;
    lora_scale_ = scale;
    lora_a.resize(static_cast<Eigen::Index>(rank) * fan_in);
    lora_b.resize(static_cast<Eigen::Index>(out_c_) * rank);  // zero-init B
    const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < lora_a.v.size(); ++i)
      lora_a.v[i] = static_cast<S>(rng.normal() * std);
    lora_active = true;
    weight.trainable = false;
    bias.trainable = false;
  }

  int lora_rank() const { return lora_rank_; }
  S lora_scale() const { return lora_scale_; }

  // Base weight merged with the LoRA delta, as the effective kernel matrix.
  Mat<S> merged_weight() const {
    const int fan_in = in_c_ * k_ * k_;
    Mat<S> w = Eigen::Map<const Mat<S>>(weight.v.data(), fan_in, out_c_).transpose();
    if (lora_active && lora_rank_ > 0) {
      Mat<S> a = Eigen::Map<const Mat<S>>(lora_a.v.data(), fan_in, lora_rank_).transpose();
      Mat<S> b = Eigen::Map<const Mat<S>>(lora_b.v.data(), lora_rank_, out_c_).transpose();
      w += lora_scale_ * b * a;
    }
    return w;
  }

  Tensor<S> forward(const Tensor<S>& x, bool keep_cache = true) {
    if (x.channels != in_c_)
      throw std::invalid_argument("Conv2d: channel mismatch");
    in_h_ = x.height;
    in_w_ = x.width;
    out_h_ = (x.height + 2 * pad_ - k_) / stride_ + 1;
    out_w_ = (x.width + 2 * pad_ - k_) / stride_ + 1;
    im2col(x, col_);

    const int fan_in = in_c_ * k_ * k_;
    Eigen::Map<const Mat<S>> w(weight.v.data(), fan_in, out_c_);
    Tensor<S> y(out_c_, out_h_, out_w_);
    Eigen::Map<Mat<S>> ym(y.data.data(), static_cast<Eigen::Index>(out_h_) * out_w_, out_c_);
    ym.noalias() = col_.transpose() * w;
    if (lora_active && lora_rank_ > 0) {
      Eigen::Map<const Mat<S>> a(lora_a.v.data(), fan_in, lora_rank_);
      Eigen::Map<const Mat<S>> b(lora_b.v.data(), lora_rank_, out_c_);
      acol_.noalias() = col_.transpose() * a;  // cols x rank
      ym.noalias() += lora_scale_ * acol_ * b;
    }
    for (int c = 0; c < out_c_; ++c) ym.col(c).array() += bias.v[c];
    if (!keep_cache) {
      col_.resize(0, 0);
      acol_.resize(0, 0);
    }
    return y;
  }

  // Consumes the cache from the last forward. Accumulates parameter
  // gradients for trainable params and returns the input gradient when
  // requested.
  Tensor<S> backward(const Tensor<S>& gy, bool need_input_grad = true) {
    if (gy.channels != out_c_ || gy.height != out_h_ || gy.width != out_w_)
      throw std::invalid_argument("Conv2d::backward: gradient shape mismatch");
    if (col_.size() == 0)
      throw std::logic_error("Conv2d::backward: no cached forward");
    const int fan_in = in_c_ * k_ * k_;
    const Eigen::Index cols = static_cast<Eigen::Index>(out_h_) * out_w_;
    Eigen::Map<const Mat<S>> gym(gy.data.data(), cols, out_c_);

    if (weight.trainable) {
      Eigen::Map<Mat<S>> gw(weight.g.data(), fan_in, out_c_);
      gw.noalias() += col_ * gym;
    }
    if (bias.trainable)
      for (int c = 0; c < out_c_; ++c) bias.g[c] += gym.col(c).sum();

    if (lora_active && lora_rank_ > 0) {
      Eigen::Map<const Mat<S>> a(lora_a.v.data(), fan_in, lora_rank_);
      Eigen::Map<const Mat<S>> b(lora_b.v.data(), lora_rank_, out_c_);
      Eigen::Map<Mat<S>> ga(lora_a.g.data(), fan_in, lora_rank_);
      Eigen::Map<Mat<S>> gb(lora_b.g.data(), lora_rank_, out_c_);
      Mat<S> gyb = gym * b.transpose();                   // cols x rank
      ga.noalias() += lora_scale_ * (col_ * gyb);
      gb.noalias() += lora_scale_ * (acol_.transpose() * gym);
    }

    Tensor<S> gx;
    if (need_input_grad) {
      Eigen::Map<const Mat<S>> w(weight.v.data(), fan_in, out_c_);
      Mat<S> gcol = w * gym.transpose();  // fan_in x cols
      if (lora_active && lora_rank_ > 0) {
        Eigen::Map<const Mat<S>> a(lora_a.v.data(), fan_in, lora_rank_);
        Eigen::Map<const Mat<S>> b(lora_b.v.data(), lora_rank_, out_c_);
        gcol.noalias() += lora_scale_ * (a * (b * gym.transpose()));
      }
      gx = Tensor<S>(in_c_, in_h_, in_w_);
      col2im(gcol, gx);
    }
    return gx;
  }

  void collect(std::vector<ParamRef<S>>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
    if (lora_active) {
      out.push_back({prefix + ".lora_a", &lora_a});
      out.push_back({prefix + ".lora_b", &lora_b});
    }
  }

 private:
  void im2col(const Tensor<S>& x, Mat<S>& col) const {
    const int fan_in = in_c_ * k_ * k_;
    const Eigen::Index cols = static_cast<Eigen::Index>(out_h_) * out_w_;
    col.resize(fan_in, cols);
    col.setZero();
    for (int ci = 0; ci < in_c_; ++ci) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const int row = (ci * k_ + ky) * k_ + kx;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in_h_) continue;
            S* dst = col.data() + row + static_cast<Eigen::Index>(oy) * out_w_ * fan_in;
            const S* src = x.data.data() + (static_cast<Eigen::Index>(ci) * in_h_ + iy) * in_w_;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < in_w_) dst[static_cast<Eigen::Index>(ox) * fan_in] = src[ix];
            }
          }
        }
      }
    }
  }

  void col2im(const Mat<S>& gcol, Tensor<S>& gx) const {
    const int fan_in = in_c_ * k_ * k_;
    for (int ci = 0; ci < in_c_; ++ci) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const int row = (ci * k_ + ky) * k_ + kx;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in_h_) continue;
            const S* src = gcol.data() + row + static_cast<Eigen::Index>(oy) * out_w_ * fan_in;
            S* dst = gx.data.data() + (static_cast<Eigen::Index>(ci) * in_h_ + iy) * in_w_;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < in_w_) dst[ix] += src[static_cast<Eigen::Index>(ox) * fan_in];
            }
          }
        }
      }
    }
  }

  int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
  int lora_rank_ = 0;
  S lora_scale_ = S(1);
  // forward cache
  Mat<S> col_, acol_;
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

// ---------------------------------------------------------------------------
template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(int in_dim, int out_dim, Rng& rng, bool zero_init = false)
      : in_(in_dim), out_(out_dim) {
    weight.resize(static_cast<Eigen::Index>(out_dim) * in_dim);
    bias.resize(out_dim);
    if (!zero_init) {
      const double std = std::sqrt(2.0 / in_dim);
      for (Eigen::Index i = 0; i < weight.v.size(); ++i)
        weight.v[i] = static_cast<S>(rng.normal() * std);
    }
  }

  Param<S> weight;  // out x in
  Param<S> bias;

  Vec<S> forward(const Vec<S>& x) {
    if (x.size() != in_) throw std::invalid_argument("Linear: dim mismatch");
    x_ = x;
    Eigen::Map<const Mat<S>> w(weight.v.data(), in_, out_);
    Vec<S> y = (w.transpose() * x.matrix()).array() + bias.v;
    return y;
  }

  Vec<S> backward(const Vec<S>& gy, bool need_input_grad = true) {
    Eigen::Map<const Mat<S>> w(weight.v.data(), in_, out_);
    if (weight.trainable) {
      Eigen::Map<Mat<S>> gw(weight.g.data(), in_, out_);
      gw.noalias() += x_.matrix() * gy.matrix().transpose();
    }
    if (bias.trainable) bias.g += gy;
    if (!need_input_grad) return {};
    return (w * gy.matrix()).array();
  }

  void collect(std::vector<ParamRef<S>>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
  }

 private:
  int in_ = 0, out_ = 0;
  Vec<S> x_;
};

// ---------------------------------------------------------------------------
// Stateless-parameter layers; each instance caches what its backward needs.
// ---------------------------------------------------------------------------
template <typename S>
struct ReLU {
  Tensor<S> forward(const Tensor<S>& x) {
    mask_ = (x.data > S(0)).template cast<S>();
    Tensor<S> y = x.like_zeros();
    y.data = x.data.max(S(0));
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) const {
    Tensor<S> gx = gy.like_zeros();
    gx.data = gy.data * mask_;
    return gx;
  }
  Vec<S> mask_;
};

template <typename S>
struct Tanh {
  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> y = x.like_zeros();
    y.data = x.data.tanh();
    out_ = y.data;
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) const {
    Tensor<S> gx = gy.like_zeros();
    gx.data = gy.data * (S(1) - out_.square());
    return gx;
  }
  Vec<S> out_;
};

template <typename S>
struct UpsampleNearest2 {
  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> y(x.channels, x.height * 2, x.width * 2);
    for (int c = 0; c < x.channels; ++c)
      for (int iy = 0; iy < x.height; ++iy)
        for (int ix = 0; ix < x.width; ++ix) {
          const S v = x.at(c, iy, ix);
          y.at(c, 2 * iy, 2 * ix) = v;
          y.at(c, 2 * iy, 2 * ix + 1) = v;
          y.at(c, 2 * iy + 1, 2 * ix) = v;
          y.at(c, 2 * iy + 1, 2 * ix + 1) = v;
        }
    return y;
  }
  Tensor<S> backward(const Tensor<S>& gy) const {
    Tensor<S> gx(gy.channels, gy.height / 2, gy.width / 2);
    for (int c = 0; c < gx.channels; ++c)
      for (int iy = 0; iy < gx.height; ++iy)
        for (int ix = 0; ix < gx.width; ++ix)
          gx.at(c, iy, ix) = gy.at(c, 2 * iy, 2 * ix) + gy.at(c, 2 * iy, 2 * ix + 1) +
                             gy.at(c, 2 * iy + 1, 2 * ix) + gy.at(c, 2 * iy + 1, 2 * ix + 1);
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Decoupled weight-decay adaptive optimizer.
// ---------------------------------------------------------------------------
template <typename S>
struct AdamW {
  S lr = static_cast<S>(2e-5);
  S beta1 = static_cast<S>(0.9);
  S beta2 = static_cast<S>(0.999);
  S eps = static_cast<S>(1e-8);
  S weight_decay = static_cast<S>(1e-4);
  long t = 0;

  void step(const std::vector<ParamRef<S>>& params) {
    ++t;
    const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1), t));
    const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2), t));
    for (const auto& ref : params) {
      Param<S>& p = *ref.p;
      if (!p.trainable) continue;
      if (p.m.size() != p.v.size()) {
        p.m = Vec<S>::Zero(p.v.size());
        p.s = Vec<S>::Zero(p.v.size());
      }
      p.m = beta1 * p.m + (S(1) - beta1) * p.g;
      p.s = beta2 * p.s + (S(1) - beta2) * p.g.square();
      p.v -= lr * ((p.m / bc1) / ((p.s / bc2).sqrt() + eps) + weight_decay * p.v);
    }
  }

  static void zero_grad(const std::vector<ParamRef<S>>& params) {
    for (const auto& ref : params) ref.p->zero_grad();
  }
};

template <typename S>
Eigen::Index total_param_count(const std::vector<ParamRef<S>>& params) {
  Eigen::Index n = 0;
  for (const auto& ref : params) n += ref.p->v.size();
  return n;
}

}  // namespace omgsr::nn
