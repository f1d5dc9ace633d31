#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace omgsr {

enum class Origin { Clean, Noisy, Lq, Predicted };

// Dense (channels, height, width) array. Storage is channel-major:
// index = (c * height + y) * width + x.
template <typename S>
struct Tensor {
  using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

  int channels = 0;
  int height = 0;
  int width = 0;
  Array data;
  Origin origin = Origin::Clean;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w) {
    if (c <= 0 || h <= 0 || w <= 0)
      throw std::invalid_argument("Tensor: non-positive shape");
    data = Array::Zero(static_cast<Eigen::Index>(c) * h * w);
  }

  static Tensor zeros(int c, int h, int w) { return Tensor(c, h, w); }

  static Tensor constant(int c, int h, int w, S value) {
    Tensor t(c, h, w);
    t.data.setConstant(value);
    return t;
  }

  Eigen::Index size() const { return data.size(); }

  S& at(int c, int y, int x) {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }
  S at(int c, int y, int x) const {
    return data[(static_cast<Eigen::Index>(c) * height + y) * width + x];
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool all_finite() const { return data.isFinite().all(); }

  Tensor like_zeros() const { return Tensor(channels, height, width); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.origin = origin;
    out.data = data.template cast<T>();
    return out;
  }
};

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                        const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

// Mean of squared element-wise differences.
template <typename S>
S mean_squared_error(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "mean_squared_error");
  return (a.data - b.data).square().sum() / static_cast<S>(a.size());
}

}  // namespace omgsr
