#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "absa/rng.hpp"

namespace absa {

// Dense row-major tensor. Rank 1 for feature maps and bias vectors, rank 2
// for matrices; scalars travel as {1} or {1,1}.
template <class T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("Tensor: shape does not match data length");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d <= 0) throw std::invalid_argument("Tensor: shape entries must be positive");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t rows() const { return shape.at(0); }
  int64_t cols() const { return rank() >= 2 ? shape.at(1) : 1; }

  T& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  const T& at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  Tensor<T> reshaped(std::vector<int64_t> s) const {
    if (numel_of(s) != numel()) throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    return Tensor(std::move(s), data);
  }
};

enum class Activation { relu, sigmoid, none };
enum class PoolMode { max, avg };

template <class T>
inline T relu_scalar(T x) {
  return x > T(0) ? x : T(0);
}

template <class T>
inline T sigmoid_scalar(T x) {
  // exp(-|x|) never overflows; both branches stay in (0,1).
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
inline T apply_activation(T x, Activation a) {
  switch (a) {
    case Activation::relu: return relu_scalar(x);
    case Activation::sigmoid: return sigmoid_scalar(x);
    case Activation::none: return x;
  }
  return x;
}

// Sum of element-wise products of one filter-sized window with the filter,
// plus bias. Activation is applied by the caller.
template <class T>
T conv_window(const Tensor<T>& window, const Tensor<T>& filter, T bias) {
  if (!window.same_shape(filter))
    throw std::invalid_argument("conv_window: window and filter shapes differ");
  T acc = bias;
  for (int64_t i = 0; i < window.numel(); ++i) acc += window.at(i) * filter.at(i);
  return acc;
}

// Slide an h x k filter over an n x k sentence matrix: output length n-h+1.
// Callers are responsible for padding sentences shorter than the filter.
template <class T>
Tensor<T> feature_map(const Tensor<T>& sentence, const Tensor<T>& filter, T bias,
                      Activation activation) {
  if (sentence.rank() != 2 || filter.rank() != 2)
    throw std::invalid_argument("feature_map: expects rank-2 sentence and filter");
  const int64_t n = sentence.shape[0], k = sentence.shape[1];
  const int64_t h = filter.shape[0];
  if (filter.shape[1] != k) throw std::invalid_argument("feature_map: embedding width mismatch");
  if (n < h) throw std::invalid_argument("feature_map: sentence shorter than filter; pad first");
  Tensor<T> out({n - h + 1});
  for (int64_t i = 0; i + h <= n; ++i) {
    T acc = bias;
    for (int64_t r = 0; r < h; ++r)
      for (int64_t c = 0; c < k; ++c) acc += sentence.at(i + r, c) * filter.at(r, c);
    out.at(i) = apply_activation(acc, activation);
  }
  return out;
}

template <class T>
T pool(const Tensor<T>& map, PoolMode mode) {
  if (map.numel() == 0) throw std::invalid_argument("pool: empty feature map");
  if (mode == PoolMode::max) {
    T best = map.at(0);
    for (int64_t i = 1; i < map.numel(); ++i) best = std::max(best, map.at(i));
    return best;
  }
  T sum = T(0);
  for (int64_t i = 0; i < map.numel(); ++i) sum += map.at(i);
  return sum / static_cast<T>(map.numel());
}

template <class T>
Tensor<T> activate(const Tensor<T>& x, Activation kind) {
  Tensor<T> out = x;
  for (T& v : out.data) v = apply_activation(v, kind);
  return out;
}

// Shift-invariant softmax: the max logit is subtracted before exponentiation.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.numel() == 0) throw std::invalid_argument("softmax: empty input");
  Tensor<T> out = x;
  T m = *std::max_element(out.data.begin(), out.data.end());
  T sum = T(0);
  for (T& v : out.data) {
    v = std::exp(v - m);
    sum += v;
  }
  for (T& v : out.data) v /= sum;
  return out;
}

// Probability clamp used before every log. Keeps the loss finite when a
// predicted probability underflows to zero.
inline constexpr double kProbClamp = 1e-12;

// Cross-entropy over a batch of probability vectors plus an L2 penalty over
// the regularized parameter set (convolution and classifier tensors; never
// embeddings).
template <class T>
T cross_entropy_l2_loss(std::span<const Tensor<T>> predicted, std::span<const int> labels,
                        std::span<const Tensor<T>* const> regularized, T lambda) {
  if (predicted.size() != labels.size())
    throw std::invalid_argument("loss: batch size mismatch between predictions and labels");
  T ce = T(0);
  for (size_t i = 0; i < predicted.size(); ++i) {
    const Tensor<T>& p = predicted[i];
    int y = labels[i];
    if (y < 0 || y >= p.numel()) throw std::invalid_argument("loss: label out of range");
    T py = std::max(p.at(y), static_cast<T>(kProbClamp));
    ce -= std::log(py);
  }
  T pen = T(0);
  for (const Tensor<T>* t : regularized)
    for (T v : t->data) pen += v * v;
  return ce + lambda * pen;
}

// Inverted dropout: zero with probability `rate`, scale survivors by
// 1/(1-rate). Evaluation mode is the exact identity.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, RngStream& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  Tensor<T> out = x;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (T& v : out.data) v = rng.uniform01() < rate ? T(0) : v * scale;
  return out;
}

// Dropout mask drawn separately so graph-based forwards can treat it as a
// constant factor (1/(1-rate) or 0 per element).
template <class T>
Tensor<T> dropout_mask(const std::vector<int64_t>& shape, double rate, RngStream& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  Tensor<T> mask = Tensor<T>::full(shape, T(1));
  if (rate == 0.0) return mask;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (T& v : mask.data) v = rng.uniform01() < rate ? T(0) : scale;
  return mask;
}

}  // namespace absa
