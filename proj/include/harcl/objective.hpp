#pragma once
#include <cfloat>
#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "harcl/cnn.hpp"
#include "harcl/regularizers.hpp"

namespace harcl {

enum class Method { plain, lwf, ewc, ewclwf };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::plain: return "plain";
    case Method::lwf: return "lwf";
    case Method::ewc: return "ewc";
    default: return "ewclwf";
  }
}

inline Method parse_method(const std::string& s) {
  if (s == "plain") return Method::plain;
  if (s == "lwf") return Method::lwf;
  if (s == "ewc") return Method::ewc;
  if (s == "ewclwf") return Method::ewclwf;
  throw ConfigError("unknown method '" + s + "' (expected plain|lwf|ewc|ewclwf)");
}

// Which objective to optimize and the regularizer state it may draw on.
// Teacher/anchors are borrowed from the training state, not owned.
template <class S>
struct LossSpec {
  Method method = Method::plain;
  const TeacherSnapshot<S>* teacher = nullptr;
  const std::vector<FisherAnchor<S>>* anchors = nullptr;
  double alpha = 0.1;
  double temperature = 3.0;
  double lambda = 5.0;
  Eq6Mode eq6 = Eq6Mode::single_count;
};

template <class S>
struct ResolvedSpec {
  LossSpec<S> spec;
  bool degraded = false;
  std::string degrade_reason;
};

// Builds the effective spec for a round. A method whose regularizer state
// does not exist yet (round 1, or lwf before any boundary) degrades to plain
// CE; the degradation is reported so callers can log it.
template <class S>
ResolvedSpec<S> resolve_loss_spec(Method method, const TeacherSnapshot<S>* teacher,
                                  const std::vector<FisherAnchor<S>>* anchors, double alpha,
                                  double temperature, double lambda,
                                  Eq6Mode eq6 = Eq6Mode::single_count) {
  ResolvedSpec<S> r;
  r.spec.alpha = alpha;
  r.spec.temperature = temperature;
  r.spec.lambda = lambda;
  r.spec.eq6 = eq6;
  const bool has_teacher = teacher != nullptr;
  const bool has_anchor = anchors != nullptr && !anchors->empty();
  const bool need_teacher = method == Method::lwf || method == Method::ewclwf;
  const bool need_anchor = method == Method::ewc || method == Method::ewclwf;
  std::string missing;
  if (need_teacher && !has_teacher) missing = "teacher snapshot";
  if (need_anchor && !has_anchor)
    missing += missing.empty() ? "fisher anchor" : " and fisher anchor";
  if (!missing.empty()) {
    r.spec.method = Method::plain;
    r.degraded = true;
    r.degrade_reason =
        std::string(method_name(method)) + " lacks its " + missing + "; training with plain CE";
    return r;
  }
  r.spec.method = method;
  if (need_teacher) r.spec.teacher = teacher;
  if (need_anchor) r.spec.anchors = anchors;
  return r;
}

struct LossBreakdown {
  double total = 0;
  double ce = 0;
  double kd = 0;
  double penalty = 0;
};

template <class S>
struct ObjectiveWorkspace {
  ForwardTrace<S> fwd;
  ForwardTrace<S> teacher_fwd;
  Tensor<S> dlogits;
};

namespace detail {

template <class S>
void check_spec(const LossSpec<S>& spec, const CnnParams<S>& params) {
  const bool need_teacher = spec.method == Method::lwf || spec.method == Method::ewclwf;
  const bool need_anchor = spec.method == Method::ewc || spec.method == Method::ewclwf;
  if (need_teacher) {
    if (!spec.teacher)
      throw ConfigError(std::string(method_name(spec.method)) +
                        " objective needs a teacher snapshot");
    if (!spec.teacher->params.congruent(params))
      throw StructuralError("teacher not shape-congruent with the student");
    if (!(spec.temperature > 0)) throw ConfigError("temperature must be > 0");
  }
  if (need_anchor && (!spec.anchors || spec.anchors->empty()))
    throw ConfigError(std::string(method_name(spec.method)) +
                      " objective needs at least one fisher anchor");
  if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
}

// Coefficients the gradient pass applies to the CE and KD terms. The
// literal Eq.-6 expansion repeats the classification term inside each inner
// total, hence the 2 + alpha.
inline void objective_coeffs(Method m, double alpha, Eq6Mode eq6, double& ce_c, double& kd_c,
                             bool& with_penalty) {
  switch (m) {
    case Method::plain: ce_c = 1; kd_c = 0; with_penalty = false; break;
    case Method::lwf: ce_c = alpha; kd_c = 1 - alpha; with_penalty = false; break;
    case Method::ewc: ce_c = 1; kd_c = 0; with_penalty = true; break;
    case Method::ewclwf:
      ce_c = eq6 == Eq6Mode::literal ? 2 + alpha : alpha;
      kd_c = 1 - alpha;
      with_penalty = true;
      break;
  }
}

// Batch-mean distillation term over the old-class logit columns:
// softmax(z/T) for teacher and student on the restricted support (which
// equals restrict-then-power-then-renormalize on the probability side).
// Adds coeff/(T*B) * (s - t) into dlogits when it is non-null.
template <class S>
double kd_batch_with_grad(const Tensor<S>& student_logits, const Tensor<S>& teacher_logits,
                          const std::vector<int>& old_idx, double T, double coeff,
                          Tensor<S>* dlogits) {
  if (!student_logits.same_shape(teacher_logits))
    throw StructuralError("teacher/student logit shapes differ");
  const std::size_t B = student_logits.shape[0], C = student_logits.shape[1];
  const std::size_t K = old_idx.size();
  const double invT = 1.0 / T;
  std::vector<double> t(K), s(K);
  double total = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const S* zt = teacher_logits.data() + b * C;
    const S* zs = student_logits.data() + b * C;
    double mt = -DBL_MAX, ms = -DBL_MAX;
    for (std::size_t k = 0; k < K; ++k) {
      t[k] = static_cast<double>(zt[old_idx[k]]) * invT;
      s[k] = static_cast<double>(zs[old_idx[k]]) * invT;
      mt = std::max(mt, t[k]);
      ms = std::max(ms, s[k]);
    }
    double tsum = 0, ssum = 0;
    for (std::size_t k = 0; k < K; ++k) {
      t[k] = std::exp(t[k] - mt);
      tsum += t[k];
      s[k] = std::exp(s[k] - ms);
      ssum += s[k];
    }
    const double lse = ms + std::log(ssum);
    for (std::size_t k = 0; k < K; ++k) {
      t[k] /= tsum;
      total -= t[k] * (static_cast<double>(zs[old_idx[k]]) * invT - lse);
      s[k] /= ssum;
    }
    if (dlogits) {
      S* d = dlogits->data() + b * C;
      const double g = coeff / (T * static_cast<double>(B));
      for (std::size_t k = 0; k < K; ++k)
        d[old_idx[k]] += static_cast<S>(g * (s[k] - t[k]));
    }
  }
  return total / static_cast<double>(B);
}

template <class S>
LossBreakdown objective_impl(const LossSpec<S>& spec, const CnnParams<S>& params,
                             const Batch<S>& batch, const Tensor<std::type_identity_t<S>>* mask,
                             Gradients<S>* g, ObjectiveWorkspace<S>& ws) {
  check_spec(spec, params);
  double ce_c, kd_c;
  bool with_penalty;
  objective_coeffs(spec.method, spec.alpha, spec.eq6, ce_c, kd_c, with_penalty);

  forward_impl(params, batch, mask, ws.fwd);
  LossBreakdown out;
  if (g) {
    if (!ws.dlogits.same_shape(ws.fwd.logits)) ws.dlogits = Tensor<S>(ws.fwd.logits.shape);
    ws.dlogits.zero();
    out.ce = softmax_ce_with_grad(ws.fwd.logits, batch.labels, ce_c, ws.dlogits);
  } else {
    out.ce = softmax_ce_loss(ws.fwd.logits, batch.labels);
  }

  if (spec.method == Method::lwf || spec.method == Method::ewclwf) {
    forward_impl(spec.teacher->params, batch, nullptr, ws.teacher_fwd);  // teacher: eval mode
    std::vector<int> old_idx(spec.teacher->old_classes.begin(), spec.teacher->old_classes.end());
    out.kd = kd_batch_with_grad(ws.fwd.logits, ws.teacher_fwd.logits, old_idx, spec.temperature,
                                kd_c, g ? &ws.dlogits : nullptr);
  }

  if (g) {
    if (!g->congruent(params)) *g = Gradients<S>(params.shape);
    backward(params, ws.fwd, mask, ws.dlogits, *g);
  }

  if (with_penalty) {
    out.penalty = ewc_penalty(params, *spec.anchors);
    if (g) ewc_penalty_grad(params, *spec.anchors, *g);
  }

  switch (spec.method) {
    case Method::plain: out.total = out.ce; break;
    case Method::lwf: out.total = lwf_total_loss(out.ce, out.kd, spec.alpha); break;
    case Method::ewc: out.total = out.ce + out.penalty; break;
    case Method::ewclwf:
      out.total = ewclwf_total_loss(out.ce, out.kd, out.penalty, spec.alpha, spec.eq6);
      break;
  }
  if (!std::isfinite(out.total)) throw NumericError("objective value is non-finite");
  return out;
}

}  // namespace detail

// Objective value and exact analytic gradients under a pinned dropout mask
// (null mask = eval-mode forward). Value and gradient always share the mask.
template <class S>
LossBreakdown grad_total_loss(const LossSpec<S>& spec, const CnnParams<S>& params,
                              const Batch<S>& batch, const Tensor<std::type_identity_t<S>>* mask,
                              Gradients<S>& g, ObjectiveWorkspace<S>& ws) {
  return detail::objective_impl(spec, params, batch, mask, &g, ws);
}

// Train-mode convenience: draws the dropout mask from rng (one draw per unit
// per sample, skipped entirely at rate 0).
template <class S>
LossBreakdown grad_total_loss(const LossSpec<S>& spec, const CnnParams<S>& params,
                              const Batch<S>& batch, Rng& rng, double dropout_rate,
                              Gradients<S>& g, ObjectiveWorkspace<S>& ws) {
  if (dropout_rate > 0.0) {
    Tensor<S> mask = draw_dropout_mask<S>(params.shape, batch.size(), dropout_rate, rng);
    return detail::objective_impl(spec, params, batch, &mask, &g, ws);
  }
  return detail::objective_impl(spec, params, batch, nullptr, &g, ws);
}

// Value only, same mask semantics — what a finite-difference probe evaluates.
template <class S>
double total_loss(const LossSpec<S>& spec, const CnnParams<S>& params, const Batch<S>& batch,
                  const Tensor<std::type_identity_t<S>>* mask, ObjectiveWorkspace<S>& ws) {
  return detail::objective_impl(spec, params, batch, mask, static_cast<Gradients<S>*>(nullptr), ws)
      .total;
}

}  // namespace harcl
