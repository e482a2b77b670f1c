#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "harcl/errors.hpp"
#include "harcl/rng.hpp"
#include "harcl/tensor.hpp"

namespace harcl {

// Layer dimensions of the 1-D CNN:
//   conv(valid, stride 1) -> ReLU -> max-pool(window, stride = window)
//   -> flatten -> dense -> ReLU -> dropout(train) -> linear head.
// Defaults are the benchmark network; tests shrink everything.
struct CnnShape {
  std::size_t channels = 9;
  std::size_t length = 128;
  std::size_t filters = 196;
  std::size_t kernel = 16;
  std::size_t pool = 4;
  std::size_t dense = 1024;
  std::size_t classes = 6;

  std::size_t conv_len() const { return length - kernel + 1; }
  std::size_t pooled_len() const { return conv_len() / pool; }
  std::size_t flat() const { return filters * pooled_len(); }

  void validate() const {
    if (channels == 0 || length == 0 || filters == 0 || kernel == 0 || pool == 0 ||
        dense == 0 || classes == 0)
      throw StructuralError("network dimensions must be positive");
    if (kernel > length) throw StructuralError("conv kernel exceeds input length");
    if (pooled_len() == 0) throw StructuralError("pool window exceeds conv output");
  }

  bool operator==(const CnnShape&) const = default;
};

template <class S>
struct CnnParams {
  CnnShape shape;
  Tensor<S> conv_w;   // [filters][kernel][channels]
  Tensor<S> conv_b;   // [filters]
  Tensor<S> dense_w;  // [dense][flat]
  Tensor<S> dense_b;  // [dense]
  Tensor<S> head_w;   // [classes][dense]
  Tensor<S> head_b;   // [classes]

  CnnParams() = default;
  explicit CnnParams(const CnnShape& sh) : shape(sh) {
    sh.validate();
    conv_w = Tensor<S>({sh.filters, sh.kernel, sh.channels});
    conv_b = Tensor<S>({sh.filters});
    dense_w = Tensor<S>({sh.dense, sh.flat()});
    dense_b = Tensor<S>({sh.dense});
    head_w = Tensor<S>({sh.classes, sh.dense});
    head_b = Tensor<S>({sh.classes});
  }

  // Fixed field order; every whole-parameter-set walk (SGD, penalties,
  // Fisher, checksums, flattening) goes through this.
  std::array<Tensor<S>*, 6> tensors() {
    return {&conv_w, &conv_b, &dense_w, &dense_b, &head_w, &head_b};
  }
  std::array<const Tensor<S>*, 6> tensors() const {
    return {&conv_w, &conv_b, &dense_w, &dense_b, &head_w, &head_b};
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->size();
    return n;
  }

  void zero() {
    for (auto* t : tensors()) t->zero();
  }

  bool congruent(const CnnParams& o) const {
    if (!(shape == o.shape)) return false;
    auto a = tensors(), b = o.tensors();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!a[i]->same_shape(*b[i])) return false;
    return true;
  }

  // FNV-1a over the scalar bit patterns in field order; detects any mutation
  // of a frozen copy.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const unsigned char* p, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
      }
    };
    for (const auto* t : tensors())
      mix(reinterpret_cast<const unsigned char*>(t->data()), t->size() * sizeof(S));
    return h;
  }
};

// Gradients carry one tensor per parameter field, identical shapes.
template <class S>
using Gradients = CnnParams<S>;

// He-style uniform init, fan-in scaled; biases start at zero. Draw order is
// field order then row-major, which pins the init to the seed.
template <class S>
CnnParams<S> he_init(const CnnShape& shape, Rng& rng) {
  CnnParams<S> p(shape);
  auto fill_uniform = [&rng](Tensor<S>& t, std::size_t fan_in) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& x : t.v) x = static_cast<S>(rng.uniform(-limit, limit));
  };
  fill_uniform(p.conv_w, shape.kernel * shape.channels);
  fill_uniform(p.dense_w, shape.flat());
  fill_uniform(p.head_w, shape.dense);
  return p;
}

template <class S>
struct Batch {
  Tensor<S> inputs;         // [B][channels][length]
  std::vector<int> labels;  // class indices

  std::size_t size() const { return labels.size(); }
};

enum class Mode { train, eval };

template <class S>
void validate_batch(const CnnParams<S>& p, const Batch<S>& b) {
  const auto& sh = p.shape;
  if (b.inputs.shape.size() != 3 || b.inputs.shape[1] != sh.channels ||
      b.inputs.shape[2] != sh.length || b.inputs.shape[0] != b.labels.size() ||
      b.labels.empty())
    throw StructuralError("batch shape " + b.inputs.shape_str() + " does not match network (" +
                          std::to_string(sh.channels) + " x " + std::to_string(sh.length) + ")");
  for (int y : b.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= sh.classes)
      throw StructuralError("label " + std::to_string(y) + " outside 0.." +
                            std::to_string(sh.classes - 1));
  if (!b.inputs.all_finite()) throw NumericError("batch contains non-finite values");
}

// Per-batch activations kept for the backward pass; buffers are reused
// across batches.
template <class S>
struct ForwardTrace {
  std::size_t batch = 0;
  Tensor<S> x;          // [B][length][channels], input repacked time-major
  Tensor<S> conv_pre;   // [B][filters][conv_len]
  Tensor<S> pool_out;   // [B][filters][pooled_len]; contiguous == dense input
  std::vector<std::int32_t> pool_arg;  // conv position feeding each pooled max
  Tensor<S> dense_pre;  // [B][dense]
  Tensor<S> head_in;    // [B][dense]: ReLU(dense_pre), dropout applied in train
  Tensor<S> logits;     // [B][classes]
  bool dropout_active = false;
  // backward scratch
  Tensor<S> d_head_in;  // [B][dense]
  Tensor<S> d_flat;     // [flat]

  void resize(const CnnShape& sh, std::size_t b) {
    if (batch == b && !x.v.empty()) return;
    batch = b;
    x = Tensor<S>({b, sh.length, sh.channels});
    conv_pre = Tensor<S>({b, sh.filters, sh.conv_len()});
    pool_out = Tensor<S>({b, sh.filters, sh.pooled_len()});
    pool_arg.assign(b * sh.filters * sh.pooled_len(), 0);
    dense_pre = Tensor<S>({b, sh.dense});
    head_in = Tensor<S>({b, sh.dense});
    logits = Tensor<S>({b, sh.classes});
    d_head_in = Tensor<S>({b, sh.dense});
    d_flat = Tensor<S>({sh.flat()});
  }
};

// Inverted-dropout mask: entries are 0 (dropped) or 1/(1-rate), so eval mode
// needs no rescaling. Draw order is sample-major.
template <class S>
Tensor<S> draw_dropout_mask(const CnnShape& sh, std::size_t batch, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  Tensor<S> mask({batch, sh.dense});
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  for (auto& m : mask.v) m = (rng.uniform() >= rate) ? keep_scale : S(0);
  return mask;
}

// Forward pipeline. `preset_mask` carries the dropout mask in train mode
// (null = eval). Returns pre-softmax logits in t.logits.
template <class S>
void forward_impl(const CnnParams<S>& p, const Batch<S>& b,
                  const Tensor<std::type_identity_t<S>>* preset_mask, ForwardTrace<S>& t) {
  validate_batch(p, b);
  const auto& sh = p.shape;
  const std::size_t B = b.size();
  const std::size_t C = sh.channels, L = sh.length, F = sh.filters, K = sh.kernel;
  const std::size_t Lc = sh.conv_len(), Lp = sh.pooled_len(), P = sh.pool;
  const std::size_t U = sh.dense, NF = sh.flat(), NC = sh.classes;
  t.resize(sh, B);
  t.dropout_active = preset_mask != nullptr;
  if (preset_mask && !(preset_mask->shape == std::vector<std::size_t>{B, U}))
    throw StructuralError("dropout mask shape mismatch");

  for (std::size_t bi = 0; bi < B; ++bi) {
    // repack [C][L] -> [L][C] so each conv window is one contiguous block
    const S* in = b.inputs.data() + bi * C * L;
    S* xb = t.x.data() + bi * L * C;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t pos = 0; pos < L; ++pos) xb[pos * C + c] = in[c * L + pos];

    // conv: dot of the [K*C] filter block with the window starting at pos
    S* conv = t.conv_pre.data() + bi * F * Lc;
    const std::size_t KC = K * C;
    for (std::size_t f = 0; f < F; ++f) {
      const S* wf = p.conv_w.data() + f * KC;
      const S bias = p.conv_b[f];
      for (std::size_t pos = 0; pos < Lc; ++pos) {
        const S* win = xb + pos * C;
        S acc = 0;
        for (std::size_t i = 0; i < KC; ++i) acc += wf[i] * win[i];
        conv[f * Lc + pos] = acc + bias;
      }
    }

    // ReLU + max-pool, remembering which conv position won
    S* pool = t.pool_out.data() + bi * NF;
    std::int32_t* parg = t.pool_arg.data() + bi * NF;
    for (std::size_t f = 0; f < F; ++f) {
      const S* row = conv + f * Lc;
      for (std::size_t pp = 0; pp < Lp; ++pp) {
        std::size_t start = pp * P;
        S best = row[start] > S(0) ? row[start] : S(0);
        std::size_t arg = start;
        for (std::size_t k = 1; k < P; ++k) {
          S val = row[start + k] > S(0) ? row[start + k] : S(0);
          if (val > best) { best = val; arg = start + k; }
        }
        pool[f * Lp + pp] = best;
        parg[f * Lp + pp] = static_cast<std::int32_t>(arg);
      }
    }

    // dense over the flattened pool output (already contiguous)
    S* dpre = t.dense_pre.data() + bi * U;
    for (std::size_t u = 0; u < U; ++u) {
      const S* wu = p.dense_w.data() + u * NF;
      S acc = 0;
      for (std::size_t i = 0; i < NF; ++i) acc += wu[i] * pool[i];
      dpre[u] = acc + p.dense_b[u];
    }

    // ReLU (+ dropout in train mode)
    S* hin = t.head_in.data() + bi * U;
    if (preset_mask) {
      const S* m = preset_mask->data() + bi * U;
      for (std::size_t u = 0; u < U; ++u) hin[u] = dpre[u] > S(0) ? dpre[u] * m[u] : S(0);
    } else {
      for (std::size_t u = 0; u < U; ++u) hin[u] = dpre[u] > S(0) ? dpre[u] : S(0);
    }

    S* lg = t.logits.data() + bi * NC;
    for (std::size_t k = 0; k < NC; ++k) {
      const S* wk = p.head_w.data() + k * U;
      S acc = 0;
      for (std::size_t u = 0; u < U; ++u) acc += wk[u] * hin[u];
      lg[k] = acc + p.head_b[k];
    }
  }
}

// Spec-level forward: train mode draws a dropout mask from `rng` (skipped
// entirely at rate 0, where train and eval coincide).
template <class S>
Tensor<S> forward(const CnnParams<S>& p, const Batch<S>& b, Mode mode, Rng* rng,
                  double dropout_rate, ForwardTrace<S>& t) {
  if (mode == Mode::train && dropout_rate > 0.0) {
    if (!rng) throw ConfigError("train-mode forward needs an rng for dropout");
    Tensor<S> mask = draw_dropout_mask<S>(p.shape, b.size(), dropout_rate, *rng);
    forward_impl(p, b, &mask, t);
  } else {
    forward_impl(p, b, nullptr, t);
  }
  return t.logits;
}

template <class S>
Tensor<S> forward(const CnnParams<S>& p, const Batch<S>& b, Mode mode, Rng* rng,
                  double dropout_rate) {
  ForwardTrace<S> t;
  return forward(p, b, mode, rng, dropout_rate, t);
}

// Chain rule from d(total)/d(logits) down to parameter gradients. `mask`
// must be the mask used by the forward pass (null in eval). Overwrites `g`.
// Accumulation is sample-major in a fixed order, so results are
// bit-reproducible.
template <class S>
void backward(const CnnParams<S>& p, ForwardTrace<S>& t,
              const Tensor<std::type_identity_t<S>>* mask, const Tensor<S>& dlogits,
              Gradients<S>& g) {
  const auto& sh = p.shape;
  if (!g.congruent(p)) throw StructuralError("gradient buffer not shape-congruent");
  const std::size_t B = t.batch;
  const std::size_t C = sh.channels, F = sh.filters, K = sh.kernel;
  const std::size_t Lc = sh.conv_len(), Lp = sh.pooled_len();
  const std::size_t U = sh.dense, NF = sh.flat(), NC = sh.classes;
  const std::size_t KC = K * C;
  g.zero();

  for (std::size_t bi = 0; bi < B; ++bi) {
    const S* dl = dlogits.data() + bi * NC;
    const S* hin = t.head_in.data() + bi * U;
    S* dhin = t.d_head_in.data() + bi * U;
    std::fill(dhin, dhin + U, S(0));
    for (std::size_t k = 0; k < NC; ++k) {
      const S dk = dl[k];
      g.head_b[k] += dk;
      S* gw = g.head_w.data() + k * U;
      const S* wk = p.head_w.data() + k * U;
      for (std::size_t u = 0; u < U; ++u) {
        gw[u] += dk * hin[u];
        dhin[u] += dk * wk[u];
      }
    }

    // dropout + dense ReLU gate
    const S* dpre = t.dense_pre.data() + bi * U;
    const S* m = mask ? mask->data() + bi * U : nullptr;
    for (std::size_t u = 0; u < U; ++u) {
      S gate = dpre[u] > S(0) ? S(1) : S(0);
      dhin[u] *= m ? gate * m[u] : gate;
    }

    const S* flat = t.pool_out.data() + bi * NF;
    S* dflat = t.d_flat.data();
    std::fill(dflat, dflat + NF, S(0));
    for (std::size_t u = 0; u < U; ++u) {
      const S du = dhin[u];
      if (du == S(0)) continue;  // dropped or ReLU-dead unit
      g.dense_b[u] += du;
      S* gw = g.dense_w.data() + u * NF;
      const S* wu = p.dense_w.data() + u * NF;
      for (std::size_t i = 0; i < NF; ++i) {
        gw[i] += du * flat[i];
        dflat[i] += du * wu[i];
      }
    }

    // pool routing + conv ReLU gate + conv weight gradients; the conv layer
    // is first, so no input gradient is needed
    const S* conv = t.conv_pre.data() + bi * F * Lc;
    const std::int32_t* parg = t.pool_arg.data() + bi * NF;
    const S* xb = t.x.data() + bi * sh.length * C;
    for (std::size_t f = 0; f < F; ++f) {
      S* gw = g.conv_w.data() + f * KC;
      for (std::size_t pp = 0; pp < Lp; ++pp) {
        const S dv = dflat[f * Lp + pp];
        if (dv == S(0)) continue;
        const std::size_t pos = static_cast<std::size_t>(parg[f * Lp + pp]);
        if (conv[f * Lc + pos] <= S(0)) continue;  // window max was clipped at 0
        g.conv_b[f] += dv;
        const S* win = xb + pos * C;
        for (std::size_t i = 0; i < KC; ++i) gw[i] += dv * win[i];
      }
    }
  }
}

// Plain SGD: theta <- theta - lr * g. No momentum, no weight decay.
template <class S>
void sgd_step(CnnParams<S>& p, const Gradients<S>& g, double lr) {
  if (!p.congruent(g)) throw StructuralError("sgd_step: gradient shapes mismatch");
  auto pt = p.tensors();
  auto gt = g.tensors();
  const S step = static_cast<S>(lr);
  for (std::size_t i = 0; i < pt.size(); ++i) {
    S* w = pt[i]->data();
    const S* d = gt[i]->data();
    const std::size_t n = pt[i]->size();
    for (std::size_t j = 0; j < n; ++j) w[j] -= step * d[j];
  }
}

// Argmax with ties broken toward the lowest class index.
template <class S>
int argmax_class(const S* logits, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i)
    if (logits[i] > logits[best]) best = i;
  return static_cast<int>(best);
}

struct ClassTally {
  long correct = 0;
  long total = 0;
};

// One eval pass over the given example rows; per-class correct/total tallies.
template <class S>
std::vector<ClassTally> evaluate_per_class(const CnnParams<S>& p, const Tensor<S>& windows,
                                           const std::vector<int>& labels,
                                           const std::vector<std::size_t>& idx,
                                           std::size_t chunk = 64) {
  const auto& sh = p.shape;
  std::vector<ClassTally> tally(sh.classes);
  ForwardTrace<S> trace;
  Batch<S> batch;
  const std::size_t CL = sh.channels * sh.length;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const std::size_t n = std::min(chunk, idx.size() - start);
    batch.inputs = Tensor<S>({n, sh.channels, sh.length});
    batch.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(batch.inputs.data() + i * CL, windows.data() + idx[start + i] * CL,
                  CL * sizeof(S));
      batch.labels[i] = labels[idx[start + i]];
    }
    forward_impl(p, batch, nullptr, trace);
    for (std::size_t i = 0; i < n; ++i) {
      const int pred = argmax_class(trace.logits.data() + i * sh.classes, sh.classes);
      tally[batch.labels[i]].total++;
      if (pred == batch.labels[i]) tally[batch.labels[i]].correct++;
    }
  }
  return tally;
}

// Row-wise softmax, max-subtraction stabilized.
template <class S>
void softmax_rows(const Tensor<S>& logits, Tensor<S>& probs) {
  if (logits.shape.size() != 2) throw StructuralError("softmax expects a [B x K] tensor");
  if (!probs.same_shape(logits)) probs = Tensor<S>(logits.shape);
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  for (std::size_t b = 0; b < B; ++b) {
    const S* z = logits.data() + b * K;
    S* p = probs.data() + b * K;
    S m = z[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, z[k]);
    S sum = 0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(z[k] - m);
      sum += p[k];
    }
    for (std::size_t k = 0; k < K; ++k) p[k] /= sum;
  }
}

// Mean over the batch of -log softmax(logits)[label]. Evaluated in
// log-sum-exp form, so a huge wrong-class logit cannot drive a log(0).
template <class S>
double softmax_ce_loss(const Tensor<S>& logits, const std::vector<int>& labels) {
  if (logits.shape.size() != 2 || logits.shape[0] != labels.size())
    throw StructuralError("loss expects logits [B x K] with one label per row");
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  double total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw StructuralError("label " + std::to_string(y) + " outside 0.." + std::to_string(K - 1));
    const S* z = logits.data() + b * K;
    double m = z[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, static_cast<double>(z[k]));
    double sum = 0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(static_cast<double>(z[k]) - m);
    total += std::log(sum) - (static_cast<double>(z[y]) - m);
  }
  if (!std::isfinite(total)) throw NumericError("cross-entropy loss is non-finite");
  return total / static_cast<double>(B);
}

// CE value plus its logit gradient: adds coeff/B * (softmax - onehot) to
// dlogits (which must be pre-shaped [B x K]).
template <class S>
double softmax_ce_with_grad(const Tensor<S>& logits, const std::vector<int>& labels,
                            double coeff, Tensor<S>& dlogits) {
  if (!dlogits.same_shape(logits)) throw StructuralError("dlogits shape mismatch");
  const double value = softmax_ce_loss(logits, labels);  // also validates labels
  const std::size_t B = logits.shape[0], K = logits.shape[1];
  Tensor<S> probs;
  softmax_rows(logits, probs);
  const S scale = static_cast<S>(coeff / static_cast<double>(B));
  for (std::size_t b = 0; b < B; ++b) {
    const S* p = probs.data() + b * K;
    S* d = dlogits.data() + b * K;
    for (std::size_t k = 0; k < K; ++k) d[k] += scale * p[k];
    d[labels[b]] -= scale;
  }
  return value;
}

enum class Precision { f64, f32 };

inline const char* precision_name(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

// Run-level hyperparameters. The last block drives the continual protocol
// (pretraining subset and Fisher sample cap) rather than the optimizer.
struct Hyper {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  double dropout_rate = 0.5;
  std::size_t epochs_per_round = 20;
  double temperature = 3.0;  // T
  double alpha = 0.1;
  double lambda = 5.0;
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  std::size_t pretrain_per_class = 10;
  std::size_t pretrain_epochs = 20;
  double pretrain_lr = 0.01;
  std::size_t fisher_n_max = 0;  // 0 = use every sample of the consolidated task

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw ConfigError("dropout_rate must be in [0,1)");
    if (epochs_per_round < 1) throw ConfigError("epochs_per_round must be >= 1");
    if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(pretrain_lr > 0)) throw ConfigError("pretrain_lr must be > 0");
  }
};

// Fraction of filtered examples whose argmax logit equals the label.
template <class S>
double evaluate_accuracy(const CnnParams<S>& p, const Tensor<S>& windows,
                         const std::vector<int>& labels, const std::set<int>& class_filter) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (class_filter.count(labels[i])) idx.push_back(i);
  if (idx.empty())
    throw EmptyEvalError("no examples with labels in the requested class filter");
  auto tally = evaluate_per_class(p, windows, labels, idx);
  long correct = 0, total = 0;
  for (const auto& t : tally) {
    correct += t.correct;
    total += t.total;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace harcl
