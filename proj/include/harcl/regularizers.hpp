#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "harcl/cnn.hpp"
#include "harcl/errors.hpp"
#include "harcl/tensor.hpp"

namespace harcl {

// Probabilities are clamped to this floor before any 1/T power or log, so a
// hard-zero entry cannot produce inf/nan.
constexpr double kProbFloor = 1e-12;

// A probability vector over an explicit (ordered) subset of class indices.
struct Distribution {
  std::vector<int> classes;
  std::vector<double> p;

  void validate() const {
    if (classes.empty() || classes.size() != p.size())
      throw StructuralError("distribution needs one probability per class");
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (std::size_t j = i + 1; j < classes.size(); ++j)
        if (classes[i] == classes[j])
          throw StructuralError("duplicate class " + std::to_string(classes[i]) +
                                " in distribution");
    double sum = 0;
    for (double x : p) {
      if (!(x >= 0)) throw StructuralError("negative or non-finite probability");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw StructuralError("probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
};

// p -> p^(1/T), renormalized. T softens (T > 1) or sharpens (T < 1); the
// argmax never moves because x^(1/T) is strictly increasing.
inline Distribution temperature_scale(const Distribution& dist, double T) {
  if (!(T > 0)) throw ConfigError("temperature must be > 0");
  dist.validate();
  Distribution out = dist;
  double sum = 0;
  for (auto& x : out.p) {
    x = std::pow(std::max(x, kProbFloor), 1.0 / T);
    sum += x;
  }
  for (auto& x : out.p) x /= sum;
  return out;
}

// Cross-entropy of the student under the teacher's (already scaled) targets:
// -sum_i t_i log s_i over the shared old-class support.
inline double kd_loss(const Distribution& teacher, const Distribution& student) {
  teacher.validate();
  student.validate();
  if (teacher.classes != student.classes)
    throw StructuralError("teacher and student distributions cover different classes");
  double loss = 0;
  for (std::size_t i = 0; i < teacher.p.size(); ++i)
    loss -= teacher.p[i] * std::log(std::clamp(student.p[i], kProbFloor, 1.0));
  return loss;
}

inline double lwf_total_loss(double ce_loss, double kd, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
  return alpha * ce_loss + (1.0 - alpha) * kd;
}

// How the combined objective assembles its terms. The literal mode expands
// L_B + L_LwF + L_EWC with each inner total keeping its own classification
// term (so L_B is counted three times, weighted 2 + alpha in total); the
// default keeps a single classification term.
enum class Eq6Mode { single_count, literal };

inline const char* eq6_mode_name(Eq6Mode m) {
  return m == Eq6Mode::single_count ? "single-count" : "literal";
}

inline double ewclwf_total_loss(double ce_loss, double kd, double penalty, double alpha,
                                Eq6Mode mode = Eq6Mode::single_count) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
  if (mode == Eq6Mode::literal)
    return ce_loss + lwf_total_loss(ce_loss, kd, alpha) + (ce_loss + penalty);
  return lwf_total_loss(ce_loss, kd, alpha) + penalty;
}

// Frozen copy of the model at a task boundary; distillation targets come
// from here. The checksum pins the copy so later training can be shown not
// to have touched it.
template <class S>
struct TeacherSnapshot {
  CnnParams<S> params;
  std::set<int> old_classes;
  double temperature = 3.0;
  std::uint64_t frozen_checksum = 0;

  TeacherSnapshot() = default;
  TeacherSnapshot(const CnnParams<S>& p, std::set<int> classes, double T)
      : params(p), old_classes(std::move(classes)), temperature(T) {
    if (!(T > 0)) throw ConfigError("temperature must be > 0");
    if (old_classes.empty())
      throw StructuralError("teacher snapshot needs a non-empty old-class set");
    for (int c : old_classes)
      if (c < 0 || static_cast<std::size_t>(c) >= params.shape.classes)
        throw StructuralError("old class " + std::to_string(c) + " outside the head range");
    frozen_checksum = params.checksum();
  }

  bool intact() const { return params.checksum() == frozen_checksum; }
};

// One consolidated task: where the parameters were (theta*), how much each
// coordinate mattered (diagonal F), and the penalty weight.
template <class S>
struct FisherAnchor {
  int task_id = 0;
  CnnParams<S> anchor;
  Gradients<S> fisher;
  double lambda = 5.0;

  void validate() const {
    if (!anchor.congruent(fisher)) throw StructuralError("fisher/anchor shapes differ");
    if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
    for (const auto* t : fisher.tensors())
      for (S x : t->v)
        if (!(x >= S(0))) throw StructuralError("negative Fisher entry");
  }
};

// sum over anchors of (lambda/2) * sum_j F_j (theta_j - theta*_j)^2.
// Anchors with lambda == 0 are skipped outright, which keeps a zero-weighted
// penalty from perturbing anything downstream.
template <class S>
double ewc_penalty(const CnnParams<S>& params, const std::vector<FisherAnchor<S>>& anchors) {
  double total = 0;
  for (const auto& a : anchors) {
    if (!params.congruent(a.anchor) || !params.congruent(a.fisher))
      throw StructuralError("anchor not shape-congruent with live parameters");
    if (a.lambda == 0.0) continue;
    double acc = 0;
    auto pt = params.tensors();
    auto at = a.anchor.tensors();
    auto ft = a.fisher.tensors();
    for (std::size_t i = 0; i < pt.size(); ++i) {
      const S* th = pt[i]->data();
      const S* st = at[i]->data();
      const S* f = ft[i]->data();
      const std::size_t n = pt[i]->size();
      for (std::size_t j = 0; j < n; ++j) {
        const double d = static_cast<double>(th[j]) - static_cast<double>(st[j]);
        acc += static_cast<double>(f[j]) * d * d;
      }
    }
    total += (a.lambda / 2.0) * acc;
  }
  return total;
}

// Adds the penalty gradient lambda * F * (theta - theta*) into g.
template <class S>
void ewc_penalty_grad(const CnnParams<S>& params, const std::vector<FisherAnchor<S>>& anchors,
                      Gradients<S>& g) {
  for (const auto& a : anchors) {
    if (!params.congruent(a.anchor) || !params.congruent(a.fisher))
      throw StructuralError("anchor not shape-congruent with live parameters");
    if (a.lambda == 0.0) continue;
    const S lam = static_cast<S>(a.lambda);
    auto pt = params.tensors();
    auto at = a.anchor.tensors();
    auto ft = a.fisher.tensors();
    auto gt = g.tensors();
    for (std::size_t i = 0; i < pt.size(); ++i) {
      const S* th = pt[i]->data();
      const S* st = at[i]->data();
      const S* f = ft[i]->data();
      S* gp = gt[i]->data();
      const std::size_t n = pt[i]->size();
      for (std::size_t j = 0; j < n; ++j) gp[j] += lam * f[j] * (th[j] - st[j]);
    }
  }
}

// Core of the empirical Fisher: mean over samples of the squared per-sample
// gradient of -log p(observed label). grad_fn(s, g) must fill g with that
// gradient for sample s; g arrives zeroed.
template <class GradFn>
std::vector<double> fisher_diag(std::size_t n_params, std::size_t n_samples, GradFn&& grad_fn) {
  if (n_samples == 0) throw StructuralError("fisher estimation needs at least one sample");
  std::vector<double> acc(n_params, 0.0), g(n_params);
  for (std::size_t s = 0; s < n_samples; ++s) {
    std::fill(g.begin(), g.end(), 0.0);
    grad_fn(s, g);
    for (std::size_t j = 0; j < n_params; ++j) acc[j] += g[j] * g[j];
  }
  for (auto& x : acc) x /= static_cast<double>(n_samples);
  return acc;
}

// Empirical Fisher for the CNN, evaluated sample-by-sample in eval mode over
// windows[idx]. n_max == 0 means use every index.
template <class S>
Gradients<S> estimate_diag_fisher(const CnnParams<S>& params, const Tensor<S>& windows,
                                  const std::vector<int>& labels,
                                  const std::vector<std::size_t>& idx, std::size_t n_max = 0) {
  if (idx.empty()) throw StructuralError("fisher estimation needs at least one sample");
  const std::size_t n = (n_max == 0) ? idx.size() : std::min(n_max, idx.size());
  const auto& sh = params.shape;
  Gradients<S> acc(sh), g(sh);
  ForwardTrace<S> trace;
  Batch<S> one;
  one.inputs = Tensor<S>({1, sh.channels, sh.length});
  one.labels.resize(1);
  Tensor<S> dlogits({1, sh.classes});
  const std::size_t CL = sh.channels * sh.length;
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(windows.data() + idx[s] * CL, CL, one.inputs.data());
    one.labels[0] = labels[idx[s]];
    forward_impl(params, one, nullptr, trace);
    dlogits.zero();
    softmax_ce_with_grad(trace.logits, one.labels, 1.0, dlogits);
    backward(params, trace, nullptr, dlogits, g);
    auto at = acc.tensors();
    auto gt = g.tensors();
    for (std::size_t i = 0; i < at.size(); ++i) {
      S* a = at[i]->data();
      const S* gp = gt[i]->data();
      const std::size_t m = at[i]->size();
      for (std::size_t j = 0; j < m; ++j) a[j] += gp[j] * gp[j];
    }
  }
  const S inv = static_cast<S>(1.0 / static_cast<double>(n));
  for (auto* t : acc.tensors())
    for (auto& x : t->v) x *= inv;
  return acc;
}

}  // namespace harcl
