#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "absa/tensor.hpp"

namespace absa {

// Reverse-mode differentiation over an explicit op tape.
//
// Nodes are tensor-level operations recorded in construction order, so the
// tape itself is a topological order: every node's inputs precede it. Forward
// values are computed eagerly when an op is added; backward() walks the tape
// in reverse and accumulates gradients into every trainable node reachable
// from the loss. Leaves flagged frozen (embedding-derived inputs, dropout
// masks) receive no gradient and their subgraphs are skipped entirely.
//
// Parameter leaves view external tensors owned by the caller; a Graph is
// rebuilt (or reset) per batch while parameters persist outside it.
template <class T>
class Graph {
 public:
  using NodeId = int32_t;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  void reset() { nodes_.clear(); }
  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

  // --- leaves ---------------------------------------------------------

  NodeId param(Tensor<T>* t) { return add_leaf(t, true); }
  NodeId input(const Tensor<T>* t) { return add_leaf(t, false); }
  NodeId constant(Tensor<T> v) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = false;
    return push(std::move(n));
  }

  const Tensor<T>& value(NodeId id) const {
    const Node& n = nodes_.at(static_cast<size_t>(id));
    return n.external ? *n.external : n.value;
  }

  bool has_grad(NodeId id) const { return nodes_.at(static_cast<size_t>(id)).has_grad; }

  const Tensor<T>& grad(NodeId id) const {
    const Node& n = nodes_.at(static_cast<size_t>(id));
    if (!n.has_grad) throw std::invalid_argument("grad: node has no gradient");
    return n.grad;
  }

  Tensor<T> grad_or_zeros(NodeId id) const {
    const Node& n = nodes_.at(static_cast<size_t>(id));
    if (n.has_grad) return n.grad;
    return Tensor<T>::zeros(value(id).shape);
  }

  // --- ops -------------------------------------------------------------

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (A.cols() != B.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    Tensor<T> out({A.rows(), B.cols()});
    mmap(out).noalias() = cmap(A) * cmap(B);
    return make(std::move(out), needs(a) || needs(b), [a, b, this](Graph& g, NodeId self) {
      const Tensor<T>& go = g.node(self).grad;
      if (g.needs(a)) mmap(g.grad_buf(a)).noalias() += cmap(go) * cmap(g.value(b)).transpose();
      if (g.needs(b)) mmap(g.grad_buf(b)).noalias() += cmap(g.value(a)).transpose() * cmap(go);
    });
  }

  // M (m x n) plus a column vector v (m) broadcast over columns.
  NodeId add_col(NodeId m, NodeId v) {
    const Tensor<T>&M = value(m), &V = value(v);
    if (V.numel() != M.rows()) throw std::invalid_argument("add_col: bias length != rows");
    Tensor<T> out = M;
    for (int64_t i = 0; i < M.rows(); ++i)
      for (int64_t j = 0; j < M.cols(); ++j) out.at(i, j) += V.at(i);
    return make(std::move(out), needs(m) || needs(v), [m, v](Graph& g, NodeId self) {
      const Tensor<T>& go = g.node(self).grad;
      if (g.needs(m)) {
        Tensor<T>& gm = g.grad_buf(m);
        for (size_t i = 0; i < go.data.size(); ++i) gm.data[i] += go.data[i];
      }
      if (g.needs(v)) {
        Tensor<T>& gv = g.grad_buf(v);
        for (int64_t i = 0; i < go.rows(); ++i)
          for (int64_t j = 0; j < go.cols(); ++j) gv.at(i) += go.at(i, j);
      }
    });
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    return make(std::move(out), needs(a) || needs(b), [a, b](Graph& g, NodeId self) {
      const Tensor<T>& go = g.node(self).grad;
      for (NodeId in : {a, b}) {
        if (!g.needs(in)) continue;
        Tensor<T>& gi = g.grad_buf(in);
        for (size_t i = 0; i < go.data.size(); ++i) gi.data[i] += go.data[i];
      }
    });
  }

  NodeId add_n(std::vector<NodeId> ids) {
    if (ids.empty()) throw std::invalid_argument("add_n: no inputs");
    Tensor<T> out = value(ids[0]);
    bool rg = needs(ids[0]);
    for (size_t k = 1; k < ids.size(); ++k) {
      const Tensor<T>& v = value(ids[k]);
      if (!v.same_shape(out)) throw std::invalid_argument("add_n: shape mismatch");
      for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += v.data[i];
      rg = rg || needs(ids[k]);
    }
    return make(std::move(out), rg, [ids = std::move(ids)](Graph& g, NodeId self) {
      const Tensor<T>& go = g.node(self).grad;
      for (NodeId in : ids) {
        if (!g.needs(in)) continue;
        Tensor<T>& gi = g.grad_buf(in);
        for (size_t i = 0; i < go.data.size(); ++i) gi.data[i] += go.data[i];
      }
    });
  }

  NodeId mul(NodeId a, NodeId b) {
    const Tensor<T>&A = value(a), &B = value(b);
    if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
    Tensor<T> out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    return make(std::move(out), needs(a) || needs(b), [a, b](Graph& g, NodeId self) {
      const Tensor<T>& go = g.node(self).grad;
      if (g.needs(a)) {
        Tensor<T>& ga = g.grad_buf(a);
        const Tensor<T>& bv = g.value(b);
        for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * bv.data[i];
      }
      if (g.needs(b)) {
        Tensor<T>& gb = g.grad_buf(b);
        const Tensor<T>& av = g.value(a);
        for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i] * av.data[i];
      }
    });
  }

  NodeId relu(NodeId a) {
    Tensor<T> out = value(a);
    for (T& x : out.data) x = relu_scalar(x);
    return make(std::move(out), needs(a), [a](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      const Tensor<T>& av = g.value(a);
      Tensor<T>& ga = g.grad_buf(a);
      // subgradient 0 at the kink
      for (size_t i = 0; i < go.data.size(); ++i)
        if (av.data[i] > T(0)) ga.data[i] += go.data[i];
    });
  }

  NodeId sigmoid(NodeId a) {
    Tensor<T> out = value(a);
    for (T& x : out.data) x = sigmoid_scalar(x);
    return make(std::move(out), needs(a), [a](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      const Tensor<T>& sv = g.node(self).value;
      Tensor<T>& ga = g.grad_buf(a);
      for (size_t i = 0; i < go.data.size(); ++i) {
        T s = sv.data[i];
        ga.data[i] += go.data[i] * s * (T(1) - s);
      }
    });
  }

  // Row-wise max over all columns; ties resolve to the lowest column index.
  NodeId row_max(NodeId a) {
    const Tensor<T>& A = value(a);
    if (A.cols() < 1) throw std::invalid_argument("row_max: empty rows");
    Tensor<T> out({A.rows()});
    std::vector<int32_t> arg(static_cast<size_t>(A.rows()), 0);
    for (int64_t i = 0; i < A.rows(); ++i) {
      T best = A.at(i, 0);
      int32_t bj = 0;
      for (int64_t j = 1; j < A.cols(); ++j)
        if (A.at(i, j) > best) {
          best = A.at(i, j);
          bj = static_cast<int32_t>(j);
        }
      out.at(i) = best;
      arg[static_cast<size_t>(i)] = bj;
    }
    return make(std::move(out), needs(a), [a, arg = std::move(arg)](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      Tensor<T>& ga = g.grad_buf(a);
      for (int64_t i = 0; i < go.numel(); ++i) ga.at(i, arg[static_cast<size_t>(i)]) += go.at(i);
    });
  }

  NodeId row_mean(NodeId a) {
    const Tensor<T>& A = value(a);
    Tensor<T> out({A.rows()});
    const T inv = T(1) / static_cast<T>(A.cols());
    for (int64_t i = 0; i < A.rows(); ++i) {
      T s = T(0);
      for (int64_t j = 0; j < A.cols(); ++j) s += A.at(i, j);
      out.at(i) = s * inv;
    }
    return make(std::move(out), needs(a), [a, inv](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      Tensor<T>& ga = g.grad_buf(a);
      for (int64_t i = 0; i < go.numel(); ++i) {
        T gi = go.at(i) * inv;
        for (int64_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += gi;
      }
    });
  }

  // Per output column b: mean of the input columns [begin_b, begin_b+count_b).
  // Used to average aspect windows instance-by-instance inside one batched
  // matrix.
  NodeId col_range_mean(NodeId a, std::vector<std::pair<int64_t, int64_t>> ranges) {
    const Tensor<T>& A = value(a);
    const int64_t B = static_cast<int64_t>(ranges.size());
    if (B == 0) throw std::invalid_argument("col_range_mean: no ranges");
    for (auto [b0, cnt] : ranges)
      if (cnt <= 0 || b0 < 0 || b0 + cnt > A.cols())
        throw std::invalid_argument("col_range_mean: range out of bounds");
    Tensor<T> out({A.rows(), B});
    for (int64_t i = 0; i < A.rows(); ++i)
      for (int64_t b = 0; b < B; ++b) {
        auto [b0, cnt] = ranges[static_cast<size_t>(b)];
        T s = T(0);
        for (int64_t j = 0; j < cnt; ++j) s += A.at(i, b0 + j);
        out.at(i, b) = s / static_cast<T>(cnt);
      }
    return make(std::move(out), needs(a), [a, ranges = std::move(ranges)](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      Tensor<T>& ga = g.grad_buf(a);
      for (int64_t i = 0; i < go.rows(); ++i)
        for (int64_t b = 0; b < go.cols(); ++b) {
          auto [b0, cnt] = ranges[static_cast<size_t>(b)];
          T gi = go.at(i, b) / static_cast<T>(cnt);
          for (int64_t j = 0; j < cnt; ++j) ga.at(i, b0 + j) += gi;
        }
    });
  }

  NodeId col_slice(NodeId a, int64_t j) {
    const Tensor<T>& A = value(a);
    if (j < 0 || j >= A.cols()) throw std::invalid_argument("col_slice: column out of range");
    Tensor<T> out({A.rows()});
    for (int64_t i = 0; i < A.rows(); ++i) out.at(i) = A.at(i, j);
    return make(std::move(out), needs(a), [a, j](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      Tensor<T>& ga = g.grad_buf(a);
      for (int64_t i = 0; i < go.numel(); ++i) ga.at(i, j) += go.at(i);
    });
  }

  NodeId slice_rows(NodeId a, int64_t r0, int64_t nrows) {
    const Tensor<T>& A = value(a);
    if (r0 < 0 || nrows <= 0 || r0 + nrows > A.rows())
      throw std::invalid_argument("slice_rows: range out of bounds");
    const int64_t c = A.cols();
    Tensor<T> out({nrows, c});
    std::copy_n(A.data.begin() + static_cast<size_t>(r0 * c), static_cast<size_t>(nrows * c),
                out.data.begin());
    return make(std::move(out), needs(a), [a, r0, c](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      Tensor<T>& ga = g.grad_buf(a);
      for (int64_t i = 0; i < go.rows(); ++i)
        for (int64_t jj = 0; jj < c; ++jj) ga.at(r0 + i, jj) += go.at(i, jj);
    });
  }

  NodeId reshape(NodeId a, std::vector<int64_t> shape) {
    Tensor<T> out = value(a).reshaped(shape);
    return make(std::move(out), needs(a), [a](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      Tensor<T>& ga = g.grad_buf(a);
      for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
    });
  }

  // Vertical concatenation; inputs must share a column count. Rank-1 inputs
  // are treated as column vectors.
  NodeId concat_rows(std::vector<NodeId> ids) {
    if (ids.empty()) throw std::invalid_argument("concat_rows: no inputs");
    const int64_t c = value(ids[0]).cols();
    int64_t total = 0;
    bool rg = false;
    for (NodeId id : ids) {
      if (value(id).cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
      total += value(id).rows();
      rg = rg || needs(id);
    }
    Tensor<T> out = c == 1 ? Tensor<T>({total}) : Tensor<T>({total, c});
    int64_t r = 0;
    for (NodeId id : ids) {
      const Tensor<T>& v = value(id);
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<size_t>(r * c));
      r += v.rows();
    }
    return make(std::move(out), rg, [ids = std::move(ids), c](Graph& g, NodeId self) {
      const Tensor<T>& go = g.node(self).grad;
      int64_t r = 0;
      for (NodeId id : ids) {
        const int64_t nr = g.value(id).rows();
        if (g.needs(id)) {
          Tensor<T>& gi = g.grad_buf(id);
          for (int64_t i = 0; i < nr * c; ++i) gi.data[static_cast<size_t>(i)] += go.data[static_cast<size_t>(r * c + i)];
        }
        r += nr;
      }
    });
  }

  // Stable softmax over a vector (or single-column matrix).
  NodeId softmax_vec(NodeId a) {
    const Tensor<T>& A = value(a);
    if (A.cols() != 1) throw std::invalid_argument("softmax_vec: expects a column vector");
    Tensor<T> out = absa::softmax(A);
    return make(std::move(out), needs(a), [a](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      const Tensor<T>& p = g.node(self).value;
      Tensor<T>& ga = g.grad_buf(a);
      T dot = T(0);
      for (size_t i = 0; i < p.data.size(); ++i) dot += go.data[i] * p.data[i];
      for (size_t i = 0; i < p.data.size(); ++i) ga.data[i] += p.data[i] * (go.data[i] - dot);
    });
  }

  // Negative log probability of the true class, with the documented 1e-12
  // clamp before the log. Gradient is zero in the clamped regime.
  NodeId nll(NodeId probs, int label) {
    const Tensor<T>& p = value(probs);
    if (label < 0 || label >= p.numel()) throw std::invalid_argument("nll: label out of range");
    T py = std::max(p.at(label), static_cast<T>(kProbClamp));
    Tensor<T> out = Tensor<T>::scalar(-std::log(py));
    return make(std::move(out), needs(probs), [probs, label](Graph& g, NodeId self) {
      if (!g.needs(probs)) return;
      const T go = g.node(self).grad.at(0);
      const T py = g.value(probs).at(label);
      if (py >= static_cast<T>(kProbClamp)) g.grad_buf(probs).at(label) -= go / py;
    });
  }

  NodeId sumsq(NodeId a) {
    const Tensor<T>& A = value(a);
    T s = T(0);
    for (T v : A.data) s += v * v;
    return make(Tensor<T>::scalar(s), needs(a), [a](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const T go = g.node(self).grad.at(0);
      const Tensor<T>& av = g.value(a);
      Tensor<T>& ga = g.grad_buf(a);
      for (size_t i = 0; i < av.data.size(); ++i) ga.data[i] += T(2) * go * av.data[i];
    });
  }

  NodeId scale(NodeId a, T c) {
    Tensor<T> out = value(a);
    for (T& v : out.data) v *= c;
    return make(std::move(out), needs(a), [a, c](Graph& g, NodeId self) {
      if (!g.needs(a)) return;
      const Tensor<T>& go = g.node(self).grad;
      Tensor<T>& ga = g.grad_buf(a);
      for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += c * go.data[i];
    });
  }

  // --- backward --------------------------------------------------------

  void backward(NodeId loss) {
    if (value(loss).numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
    grad_buf(loss).data[0] = T(1);
    for (NodeId i = loss; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.has_grad || !n.backward_fn) continue;
      n.backward_fn(*this, i);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void(Graph&, NodeId)> backward_fn;
  };

  using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  static Eigen::Map<const EMat> cmap(const Tensor<T>& t) {
    return Eigen::Map<const EMat>(t.data.data(), t.rows(), t.cols());
  }
  static Eigen::Map<EMat> mmap(Tensor<T>& t) {
    return Eigen::Map<EMat>(t.data.data(), t.rows(), t.cols());
  }

  Node& node(NodeId id) { return nodes_.at(static_cast<size_t>(id)); }
  bool needs(NodeId id) const { return nodes_.at(static_cast<size_t>(id)).requires_grad; }

  Tensor<T>& grad_buf(NodeId id) {
    Node& n = node(id);
    if (!n.has_grad) {
      n.grad = Tensor<T>::zeros(value(id).shape);
      n.has_grad = true;
    }
    return n.grad;
  }

  NodeId add_leaf(const Tensor<T>* t, bool trainable) {
    Node n;
    n.external = t;
    n.requires_grad = trainable;
    return push(std::move(n));
  }

  template <class Fn>
  NodeId make(Tensor<T> out, bool requires_grad, Fn&& backward) {
    Node n;
    n.value = std::move(out);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward_fn = std::forward<Fn>(backward);
    return push(std::move(n));
  }

  NodeId push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace absa
