#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absa/embedding.hpp"
#include "absa/graph.hpp"
#include "absa/rng.hpp"
#include "absa/tensor.hpp"
#include "absa/text_data.hpp"

namespace absa {

enum class ModelKind { vanilla, pf, pg };

const char* to_string(ModelKind k);
std::optional<ModelKind> model_kind_from_string(std::string_view s);

struct ModelConfig {
  ModelKind kind = ModelKind::vanilla;
  int64_t embed_dim = 300;
  std::vector<int64_t> widths = {1, 2, 3, 4};      // sentence filter widths
  int64_t maps_per_width = 100;                    // filters per width
  std::vector<int64_t> aspect_widths = {1, 2, 3, 4};
  int64_t num_classes = 3;
  // Both bias terms of the gated convolution share one symbol in its usual
  // formulation; the default keeps them independent, tying is available for
  // the literal reading.
  bool tie_gate_bias = false;
  // The gated model classifies from the gated features alone; this appends
  // the plain max-pooled features as an ablation.
  bool pg_concat_general = false;

  void validate() const;
  int64_t total_filters() const {
    return static_cast<int64_t>(widths.size()) * maps_per_width;
  }
  int64_t max_width() const;
  int64_t max_aspect_width() const;
  bool uses_aspect() const { return kind != ModelKind::vanilla; }

  // |Θ|: width of the classifier input.
  int64_t feature_size() const;
};

// Sentence filter slots of one width are assigned aspect-CNN widths in
// contiguous blocks: slot j takes aspect_widths[j * |aspect_widths| / d_h],
// i.e. an even split (25/25/25/25 under the defaults).
std::vector<int64_t> aspect_group_sizes(int64_t maps_per_width, int64_t n_aspect_widths);

// The trainable parameter set p: filter banks, aspect extractor, classifier.
// Embeddings never appear here.
template <class T>
struct ModelParams {
  ModelConfig config;

  std::vector<Tensor<T>> conv_w;  // [wi]: (maps) x (h*k)
  std::vector<Tensor<T>> conv_b;  // [wi]: (maps)
  // aspect extractor, [wi][ti]: ((S*h*k) x (ht*k)) weights + (S*h*k) biases,
  // where S = aspect_group_sizes(maps, |aspect_widths|)[ti]; empty groups
  // hold empty tensors.
  std::vector<std::vector<Tensor<T>>> aspect_w;
  std::vector<std::vector<Tensor<T>>> aspect_b;
  std::vector<Tensor<T>> pf_bias;    // pf: per width, (maps)
  std::vector<Tensor<T>> gate_bias;  // pg untied: per width, (maps)
  Tensor<T> cls_w;                   // (classes) x |Θ|
  Tensor<T> cls_b;                   // (classes)

  static ModelParams init(const ModelConfig& config, RngStream& init_rng);

  // Fixed traversal order; also the checkpoint layout.
  std::vector<std::pair<std::string, Tensor<T>*>> named();
  std::vector<std::pair<std::string, const Tensor<T>*>> named() const;

  int64_t parameter_count() const;

  template <class U>
  ModelParams<U> cast() const;
};

// A (sentence, aspect) pair ready for the model: token ids, aspect span,
// task-encoded label.
struct PreparedInstance {
  std::vector<int> ids;
  int span_start = 0;
  int span_len = 0;
  int label = 0;
};

PreparedInstance prepare_instance(const TokenizedInstance& inst, const Vocabulary& vocab,
                                  TaskMode task);
std::vector<PreparedInstance> prepare_instances(std::span<const TokenizedInstance> instances,
                                                const Vocabulary& vocab, TaskMode task);

// Constant convolution inputs for one instance. Sentences are padded with
// zero rows up to the widest sentence filter and aspects up to the widest
// aspect filter; windows made entirely of padding are left out, so appending
// padding never changes an output.
template <class T>
struct InstanceViews {
  std::vector<Tensor<T>> sent;    // [wi]: (h*k) x n_valid_windows
  std::vector<Tensor<T>> aspect;  // [ti]: (ht*k) x m_valid_windows
};

template <class T>
InstanceViews<T> make_views(const PreparedInstance& inst, const EmbeddingTable& table,
                            const ModelConfig& config);

template <class T>
struct BuildOptions {
  bool training = false;
  double dropout_rate = 0.0;
  RngStream* dropout_rng = nullptr;  // consulted only when training with dropout
  T lambda = T(0);
  bool with_loss = true;
};

// One mini-batch as a differentiable graph. Aspect-extractor convolutions are
// batched across instances into single matrix products.
template <class T>
struct BatchGraph {
  Graph<T> g;
  std::vector<typename Graph<T>::NodeId> theta;  // per instance, |Θ|
  std::vector<typename Graph<T>::NodeId> probs;  // per instance, classes
  typename Graph<T>::NodeId loss = -1;
  std::vector<std::pair<std::string, typename Graph<T>::NodeId>> params;
  double ce_sum = 0.0;  // sum of per-instance cross-entropy terms
};

template <class T>
BatchGraph<T> build_batch(ModelParams<T>& params, std::span<const PreparedInstance> batch,
                          const EmbeddingTable& table, const BuildOptions<T>& opt);

// --- evaluation-mode conveniences ---------------------------------------

template <class T>
Tensor<T> model_features(ModelParams<T>& params, const PreparedInstance& inst,
                         const EmbeddingTable& table);

template <class T>
Tensor<T> model_probabilities(ModelParams<T>& params, const PreparedInstance& inst,
                              const EmbeddingTable& table);

// Θ_t produced by one sentence-filter slot's aspect CNN, as an h x k matrix.
template <class T>
Tensor<T> aspect_filter_matrix(ModelParams<T>& params, const PreparedInstance& inst,
                               const EmbeddingTable& table, int64_t width_index, int64_t slot);

// Dropout -> affine map -> softmax. Standalone version of the classification
// head operating on a ready feature vector.
template <class T>
Tensor<T> classify(const Tensor<T>& theta, const Tensor<T>& cls_w, const Tensor<T>& cls_b,
                   double dropout_rate, RngStream* rng, bool training);

// Argmax in evaluation mode; ties break toward the lowest class index.
template <class T>
int predict_label(ModelParams<T>& params, const PreparedInstance& inst,
                  const EmbeddingTable& table, Tensor<T>* probs_out = nullptr);

// ------------------------------------------------------------------------
// implementation
// ------------------------------------------------------------------------

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::vanilla: return "vanilla";
    case ModelKind::pf: return "pf";
    case ModelKind::pg: return "pg";
  }
  return "?";
}

inline std::optional<ModelKind> model_kind_from_string(std::string_view s) {
  if (s == "vanilla") return ModelKind::vanilla;
  if (s == "pf") return ModelKind::pf;
  if (s == "pg") return ModelKind::pg;
  return std::nullopt;
}

inline void ModelConfig::validate() const {
  if (embed_dim < 1) throw std::invalid_argument("model config: embed_dim must be positive");
  if (widths.empty()) throw std::invalid_argument("model config: no filter widths");
  for (size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw std::invalid_argument("model config: widths must be positive");
    if (i > 0 && widths[i] <= widths[i - 1])
      throw std::invalid_argument("model config: widths must be strictly increasing");
  }
  if (maps_per_width < 1) throw std::invalid_argument("model config: maps_per_width must be positive");
  if (num_classes < 2) throw std::invalid_argument("model config: need at least two classes");
  if (uses_aspect()) {
    if (aspect_widths.empty())
      throw std::invalid_argument("model config: aspect widths required for this model");
    for (size_t i = 0; i < aspect_widths.size(); ++i) {
      if (aspect_widths[i] < 1)
        throw std::invalid_argument("model config: aspect widths must be positive");
      if (i > 0 && aspect_widths[i] <= aspect_widths[i - 1])
        throw std::invalid_argument("model config: aspect widths must be strictly increasing");
    }
  }
}

inline int64_t ModelConfig::max_width() const {
  int64_t m = 1;
  for (int64_t w : widths) m = std::max(m, w);
  return m;
}

inline int64_t ModelConfig::max_aspect_width() const {
  int64_t m = 1;
  for (int64_t w : aspect_widths) m = std::max(m, w);
  return m;
}

inline int64_t ModelConfig::feature_size() const {
  const int64_t d = total_filters();
  switch (kind) {
    case ModelKind::vanilla: return d;
    case ModelKind::pf: return 2 * d;
    case ModelKind::pg: return pg_concat_general ? 2 * d : d;
  }
  return d;
}

inline std::vector<int64_t> aspect_group_sizes(int64_t maps_per_width, int64_t n_aspect_widths) {
  std::vector<int64_t> sizes(static_cast<size_t>(n_aspect_widths), 0);
  for (int64_t j = 0; j < maps_per_width; ++j)
    ++sizes[static_cast<size_t>(j * n_aspect_widths / maps_per_width)];
  return sizes;
}

template <class T>
ModelParams<T> ModelParams<T>::init(const ModelConfig& config, RngStream& init_rng) {
  config.validate();
  ModelParams<T> p;
  p.config = config;
  const int64_t k = config.embed_dim;
  const int64_t maps = config.maps_per_width;

  auto uniform_fill = [&](Tensor<T>& t) {
    for (T& v : t.data) v = static_cast<T>(init_rng.uniform_open(-0.01, 0.01));
  };

  for (int64_t h : config.widths) {
    Tensor<T> w({maps, h * k});
    uniform_fill(w);
    p.conv_w.push_back(std::move(w));
    p.conv_b.push_back(Tensor<T>::zeros({maps}));
  }
  if (config.uses_aspect()) {
    const auto sizes = aspect_group_sizes(maps, static_cast<int64_t>(config.aspect_widths.size()));
    for (int64_t h : config.widths) {
      std::vector<Tensor<T>> ws, bs;
      for (size_t ti = 0; ti < config.aspect_widths.size(); ++ti) {
        const int64_t S = sizes[ti];
        if (S == 0) {
          ws.emplace_back();
          bs.emplace_back();
          continue;
        }
        const int64_t ht = config.aspect_widths[ti];
        Tensor<T> w({S * h * k, ht * k});
        uniform_fill(w);
        ws.push_back(std::move(w));
        bs.push_back(Tensor<T>::zeros({S * h * k}));
      }
      p.aspect_w.push_back(std::move(ws));
      p.aspect_b.push_back(std::move(bs));
    }
  }
  if (config.kind == ModelKind::pf)
    for (size_t wi = 0; wi < config.widths.size(); ++wi)
      p.pf_bias.push_back(Tensor<T>::zeros({maps}));
  if (config.kind == ModelKind::pg && !config.tie_gate_bias)
    for (size_t wi = 0; wi < config.widths.size(); ++wi)
      p.gate_bias.push_back(Tensor<T>::zeros({maps}));

  p.cls_w = Tensor<T>({config.num_classes, config.feature_size()});
  uniform_fill(p.cls_w);
  p.cls_b = Tensor<T>::zeros({config.num_classes});
  return p;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelParams<T>::named() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (size_t wi = 0; wi < config.widths.size(); ++wi) {
    const std::string h = std::to_string(config.widths[wi]);
    out.emplace_back("conv.h" + h + ".weight", &conv_w[wi]);
    out.emplace_back("conv.h" + h + ".bias", &conv_b[wi]);
  }
  if (config.uses_aspect()) {
    for (size_t wi = 0; wi < config.widths.size(); ++wi) {
      const std::string h = std::to_string(config.widths[wi]);
      for (size_t ti = 0; ti < config.aspect_widths.size(); ++ti) {
        if (aspect_w[wi][ti].numel() == 0) continue;
        const std::string ht = std::to_string(config.aspect_widths[ti]);
        out.emplace_back("aspect.h" + h + ".a" + ht + ".weight", &aspect_w[wi][ti]);
        out.emplace_back("aspect.h" + h + ".a" + ht + ".bias", &aspect_b[wi][ti]);
      }
    }
  }
  if (config.kind == ModelKind::pf)
    for (size_t wi = 0; wi < config.widths.size(); ++wi)
      out.emplace_back("pf.h" + std::to_string(config.widths[wi]) + ".bias", &pf_bias[wi]);
  if (config.kind == ModelKind::pg && !config.tie_gate_bias)
    for (size_t wi = 0; wi < config.widths.size(); ++wi)
      out.emplace_back("gate.h" + std::to_string(config.widths[wi]) + ".bias", &gate_bias[wi]);
  out.emplace_back("classifier.weight", &cls_w);
  out.emplace_back("classifier.bias", &cls_b);
  return out;
}

template <class T>
std::vector<std::pair<std::string, const Tensor<T>*>> ModelParams<T>::named() const {
  auto mutable_named = const_cast<ModelParams<T>*>(this)->named();
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  out.reserve(mutable_named.size());
  for (auto& [name, t] : mutable_named) out.emplace_back(name, t);
  return out;
}

template <class T>
int64_t ModelParams<T>::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named()) n += t->numel();
  return n;
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.config = config;
  auto copy = [](const Tensor<T>& src) {
    if (src.numel() == 0) return Tensor<U>();
    Tensor<U> dst(src.shape);
    for (size_t i = 0; i < src.data.size(); ++i) dst.data[i] = static_cast<U>(src.data[i]);
    return dst;
  };
  for (const auto& t : conv_w) out.conv_w.push_back(copy(t));
  for (const auto& t : conv_b) out.conv_b.push_back(copy(t));
  for (const auto& group : aspect_w) {
    std::vector<Tensor<U>> g;
    for (const auto& t : group) g.push_back(copy(t));
    out.aspect_w.push_back(std::move(g));
  }
  for (const auto& group : aspect_b) {
    std::vector<Tensor<U>> g;
    for (const auto& t : group) g.push_back(copy(t));
    out.aspect_b.push_back(std::move(g));
  }
  for (const auto& t : pf_bias) out.pf_bias.push_back(copy(t));
  for (const auto& t : gate_bias) out.gate_bias.push_back(copy(t));
  out.cls_w = copy(cls_w);
  out.cls_b = copy(cls_b);
  return out;
}

inline PreparedInstance prepare_instance(const TokenizedInstance& inst, const Vocabulary& vocab,
                                         TaskMode task) {
  PreparedInstance out;
  out.ids.reserve(inst.tokens.size());
  for (const auto& tok : inst.tokens) out.ids.push_back(vocab.id_of(tok));
  out.span_start = inst.span_start;
  out.span_len = inst.span_len;
  out.label = label_index(inst.label, task);
  if (out.span_start < 0 || out.span_len < 1 ||
      out.span_start + out.span_len > static_cast<int>(out.ids.size()))
    throw DataError("instance has an aspect span outside its sentence");
  return out;
}

inline std::vector<PreparedInstance> prepare_instances(
    std::span<const TokenizedInstance> instances, const Vocabulary& vocab, TaskMode task) {
  std::vector<PreparedInstance> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(prepare_instance(inst, vocab, task));
  return out;
}

namespace detail {

// Windows of `width` rows from an id sequence padded with zero rows to at
// least pad_to rows. Only windows touching at least one real token are
// emitted, as (width*k) x n_windows with each column one flattened window.
template <class T>
Tensor<T> window_matrix(std::span<const int> ids, const EmbeddingTable& table, int64_t width,
                        int64_t pad_to) {
  const int64_t k = table.dim();
  const int64_t n_real = static_cast<int64_t>(ids.size());
  const int64_t n = std::max(n_real, pad_to);
  const int64_t total = n - width + 1;
  const int64_t valid = std::min(total, n_real);
  Tensor<T> out({width * k, valid});
  for (int64_t w = 0; w < valid; ++w)
    for (int64_t r = 0; r < width; ++r) {
      const int64_t row = w + r;
      if (row >= n_real) continue;  // zero padding
      auto src = table.row(ids[static_cast<size_t>(row)]);
      for (int64_t c = 0; c < k; ++c)
        out.at(r * k + c, w) = static_cast<T>(src[static_cast<size_t>(c)]);
    }
  return out;
}

}  // namespace detail

template <class T>
InstanceViews<T> make_views(const PreparedInstance& inst, const EmbeddingTable& table,
                            const ModelConfig& config) {
  InstanceViews<T> views;
  std::span<const int> ids(inst.ids);
  for (int64_t h : config.widths)
    views.sent.push_back(detail::window_matrix<T>(ids, table, h, config.max_width()));
  if (config.uses_aspect()) {
    std::span<const int> aspect = ids.subspan(static_cast<size_t>(inst.span_start),
                                              static_cast<size_t>(inst.span_len));
    for (int64_t ht : config.aspect_widths)
      views.aspect.push_back(detail::window_matrix<T>(aspect, table, ht, ht));
  }
  return views;
}

template <class T>
BatchGraph<T> build_batch(ModelParams<T>& params, std::span<const PreparedInstance> batch,
                          const EmbeddingTable& table, const BuildOptions<T>& opt) {
  using NodeId = typename Graph<T>::NodeId;
  const ModelConfig& cfg = params.config;
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("build_batch: empty batch");
  if (opt.training && opt.dropout_rate > 0.0 && opt.dropout_rng == nullptr)
    throw std::invalid_argument("build_batch: dropout requires an rng stream");

  BatchGraph<T> bg;
  Graph<T>& g = bg.g;
  const size_t B = batch.size();
  const size_t n_w = cfg.widths.size();
  const size_t n_aw = cfg.uses_aspect() ? cfg.aspect_widths.size() : 0;
  const auto group = cfg.uses_aspect()
                         ? aspect_group_sizes(cfg.maps_per_width,
                                              static_cast<int64_t>(cfg.aspect_widths.size()))
                         : std::vector<int64_t>{};

  // parameter leaves (registered once per graph, shared by all instances);
  // registration order follows named(), which is also the checkpoint order
  std::unordered_map<const Tensor<T>*, NodeId> leaf_of;
  for (auto& [name, t] : params.named()) {
    NodeId id = g.param(t);
    bg.params.emplace_back(name, id);
    leaf_of.emplace(t, id);
  }
  std::vector<NodeId> conv_w(n_w), conv_b(n_w), pf_bias(n_w), gate_bias(n_w);
  std::vector<std::vector<NodeId>> aspect_w(n_w), aspect_b(n_w);
  for (size_t wi = 0; wi < n_w; ++wi) {
    conv_w[wi] = leaf_of.at(&params.conv_w[wi]);
    conv_b[wi] = leaf_of.at(&params.conv_b[wi]);
    if (cfg.uses_aspect()) {
      aspect_w[wi].assign(n_aw, -1);
      aspect_b[wi].assign(n_aw, -1);
      for (size_t ti = 0; ti < n_aw; ++ti) {
        if (group[ti] == 0) continue;
        aspect_w[wi][ti] = leaf_of.at(&params.aspect_w[wi][ti]);
        aspect_b[wi][ti] = leaf_of.at(&params.aspect_b[wi][ti]);
      }
    }
    if (cfg.kind == ModelKind::pf) pf_bias[wi] = leaf_of.at(&params.pf_bias[wi]);
    if (cfg.kind == ModelKind::pg && !cfg.tie_gate_bias)
      gate_bias[wi] = leaf_of.at(&params.gate_bias[wi]);
  }
  NodeId cls_w = leaf_of.at(&params.cls_w);
  NodeId cls_b = leaf_of.at(&params.cls_b);

  std::vector<InstanceViews<T>> views;
  views.reserve(B);
  for (const auto& inst : batch) views.push_back(make_views<T>(inst, table, cfg));

  // Aspect extractor, batched across instances: per (sentence width, aspect
  // width) group one GEMM computes every slot's Θ_t for the whole batch.
  // filt[b][wi] = all Θ_t of that width stacked, (maps) x (h*k), slot order.
  std::vector<std::vector<NodeId>> filt(B, std::vector<NodeId>(n_w, -1));
  if (cfg.uses_aspect()) {
    // concatenated aspect windows per aspect-width index
    std::vector<NodeId> a_cat(n_aw, -1);
    std::vector<std::vector<std::pair<int64_t, int64_t>>> ranges(n_aw);
    for (size_t ti = 0; ti < n_aw; ++ti) {
      if (group[ti] == 0) continue;
      int64_t cols = 0;
      for (size_t b = 0; b < B; ++b) cols += views[b].aspect[ti].cols();
      const int64_t rows = cfg.aspect_widths[ti] * cfg.embed_dim;
      Tensor<T> cat({rows, cols});
      int64_t off = 0;
      for (size_t b = 0; b < B; ++b) {
        const Tensor<T>& a = views[b].aspect[ti];
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < a.cols(); ++c) cat.at(r, off + c) = a.at(r, c);
        ranges[ti].emplace_back(off, a.cols());
        off += a.cols();
      }
      a_cat[ti] = g.constant(std::move(cat));
    }
    for (size_t wi = 0; wi < n_w; ++wi) {
      const int64_t hk = cfg.widths[wi] * cfg.embed_dim;
      // per instance: the per-group filters, reassembled in slot order
      std::vector<std::vector<NodeId>> parts(B);
      for (size_t ti = 0; ti < n_aw; ++ti) {
        if (group[ti] == 0) continue;
        NodeId pre = g.add_col(g.matmul(aspect_w[wi][ti], a_cat[ti]), aspect_b[wi][ti]);
        NodeId feats = g.relu(pre);                       // (S*h*k) x total windows
        NodeId pooled = g.col_range_mean(feats, ranges[ti]);  // (S*h*k) x B
        for (size_t b = 0; b < B; ++b)
          parts[b].push_back(g.reshape(g.col_slice(pooled, static_cast<int64_t>(b)),
                                       {group[ti], hk}));
      }
      for (size_t b = 0; b < B; ++b)
        filt[b][wi] = parts[b].size() == 1 ? parts[b][0] : g.concat_rows(parts[b]);
    }
  }

  std::vector<NodeId> nlls;
  nlls.reserve(B);
  for (size_t b = 0; b < B; ++b) {
    std::vector<NodeId> general_parts;   // Θ_g blocks, width ascending
    std::vector<NodeId> aspect_parts;    // Θ_s or gated blocks, width ascending
    for (size_t wi = 0; wi < n_w; ++wi) {
      NodeId sw = g.constant(views[b].sent[wi]);
      if (cfg.kind != ModelKind::pg || cfg.pg_concat_general) {
        NodeId pre = g.add_col(g.matmul(conv_w[wi], sw), conv_b[wi]);
        general_parts.push_back(g.row_max(g.relu(pre)));
      }
      if (cfg.kind == ModelKind::pf) {
        NodeId pre = g.add_col(g.matmul(filt[b][wi], sw), pf_bias[wi]);
        aspect_parts.push_back(g.row_max(g.sigmoid(pre)));
      } else if (cfg.kind == ModelKind::pg) {
        NodeId lin = g.add_col(g.matmul(conv_w[wi], sw), conv_b[wi]);
        NodeId gate_pre = g.add_col(g.matmul(filt[b][wi], sw),
                                    cfg.tie_gate_bias ? conv_b[wi] : gate_bias[wi]);
        NodeId gated = g.mul(lin, g.sigmoid(gate_pre));
        aspect_parts.push_back(g.row_max(gated));
      }
    }

    std::vector<NodeId> blocks = std::move(general_parts);
    blocks.insert(blocks.end(), aspect_parts.begin(), aspect_parts.end());
    NodeId theta = blocks.size() == 1 ? blocks[0] : g.concat_rows(blocks);

    if (opt.training && opt.dropout_rate > 0.0) {
      Tensor<T> mask =
          dropout_mask<T>({cfg.feature_size()}, opt.dropout_rate, *opt.dropout_rng);
      theta = g.mul(theta, g.constant(std::move(mask)));
    }
    bg.theta.push_back(theta);

    NodeId logits = g.add_col(g.matmul(cls_w, theta), cls_b);
    NodeId probs = g.softmax_vec(logits);
    bg.probs.push_back(probs);

    if (opt.with_loss) {
      NodeId nl = g.nll(probs, batch[b].label);
      bg.ce_sum += static_cast<double>(g.value(nl).at(0));
      nlls.push_back(nl);
    }
  }

  if (opt.with_loss) {
    NodeId total = nlls.size() == 1 ? nlls[0] : bg.g.add_n(nlls);
    if (opt.lambda != T(0)) {
      std::vector<NodeId> squares;
      squares.reserve(bg.params.size());
      for (auto& [name, id] : bg.params) squares.push_back(g.sumsq(id));
      NodeId penalty =
          g.scale(squares.size() == 1 ? squares[0] : g.add_n(squares), opt.lambda);
      total = g.add(total, penalty);
    }
    bg.loss = total;
  }
  return bg;
}

template <class T>
Tensor<T> model_features(ModelParams<T>& params, const PreparedInstance& inst,
                         const EmbeddingTable& table) {
  BuildOptions<T> opt;
  opt.with_loss = false;
  auto bg = build_batch(params, std::span(&inst, 1), table, opt);
  return bg.g.value(bg.theta[0]);
}

template <class T>
Tensor<T> model_probabilities(ModelParams<T>& params, const PreparedInstance& inst,
                              const EmbeddingTable& table) {
  BuildOptions<T> opt;
  opt.with_loss = false;
  auto bg = build_batch(params, std::span(&inst, 1), table, opt);
  return bg.g.value(bg.probs[0]);
}

template <class T>
Tensor<T> aspect_filter_matrix(ModelParams<T>& params, const PreparedInstance& inst,
                               const EmbeddingTable& table, int64_t width_index, int64_t slot) {
  const ModelConfig& cfg = params.config;
  if (!cfg.uses_aspect()) throw std::invalid_argument("aspect_filter_matrix: vanilla model");
  if (width_index < 0 || width_index >= static_cast<int64_t>(cfg.widths.size()))
    throw std::invalid_argument("aspect_filter_matrix: width index out of range");
  if (slot < 0 || slot >= cfg.maps_per_width)
    throw std::invalid_argument("aspect_filter_matrix: slot out of range");

  const auto group =
      aspect_group_sizes(cfg.maps_per_width, static_cast<int64_t>(cfg.aspect_widths.size()));
  const size_t ti = static_cast<size_t>(slot * static_cast<int64_t>(cfg.aspect_widths.size()) /
                                        cfg.maps_per_width);
  int64_t offset = 0;
  for (size_t t = 0; t < ti; ++t) offset += group[t];
  const int64_t slot_in_group = slot - offset;

  auto views = make_views<T>(inst, table, cfg);
  Graph<T> g;
  auto w = g.param(&params.aspect_w[static_cast<size_t>(width_index)][ti]);
  auto bias = g.param(&params.aspect_b[static_cast<size_t>(width_index)][ti]);
  auto a = g.constant(views.aspect[ti]);
  auto feats = g.relu(g.add_col(g.matmul(w, a), bias));
  auto pooled = g.row_mean(feats);  // (S*h*k)
  const int64_t hk = cfg.widths[static_cast<size_t>(width_index)] * cfg.embed_dim;
  auto sliced = g.slice_rows(g.reshape(pooled, {group[ti], hk}), slot_in_group, 1);
  return g.value(sliced).reshaped({cfg.widths[static_cast<size_t>(width_index)], cfg.embed_dim});
}

template <class T>
Tensor<T> classify(const Tensor<T>& theta, const Tensor<T>& cls_w, const Tensor<T>& cls_b,
                   double dropout_rate, RngStream* rng, bool training) {
  if (cls_w.cols() != theta.numel())
    throw std::invalid_argument("classify: feature width does not match the classifier");
  Tensor<T> input = theta;
  if (training && dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("classify: dropout requires an rng stream");
    input = dropout(input, dropout_rate, *rng, true);
  }
  Tensor<T> logits({cls_w.rows()});
  for (int64_t c = 0; c < cls_w.rows(); ++c) {
    T acc = cls_b.at(c);
    for (int64_t j = 0; j < cls_w.cols(); ++j) acc += cls_w.at(c, j) * input.at(j);
    logits.at(c) = acc;
  }
  return softmax(logits);
}

template <class T>
int predict_label(ModelParams<T>& params, const PreparedInstance& inst,
                  const EmbeddingTable& table, Tensor<T>* probs_out) {
  Tensor<T> probs = model_probabilities(params, inst, table);
  int best = 0;
  for (int64_t c = 1; c < probs.numel(); ++c)
    if (probs.at(c) > probs.at(best)) best = static_cast<int>(c);
  if (probs_out) *probs_out = std::move(probs);
  return best;
}

}  // namespace absa
