#pragma once
#include <algorithm>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "harcl/cnn.hpp"
#include "harcl/har_data.hpp"
#include "harcl/metrics.hpp"
#include "harcl/objective.hpp"
#include "harcl/regularizers.hpp"
#include "harcl/scenario.hpp"

namespace harcl {

enum class ConsolidationMode { task_boundary, every_round };

inline const char* consolidation_mode_name(ConsolidationMode m) {
  return m == ConsolidationMode::task_boundary ? "task-boundary" : "every-round";
}

struct RoundLog {
  int round = 0;
  int task = 0;
  std::set<int> trained;
  std::vector<ClassTally> tally;  // indexed by class id; unseen classes stay 0/0
  double a_r = 0;                 // pooled accuracy over seen-class test examples
  double final_loss = 0;          // mean objective over the last epoch's batches
  std::size_t epochs = 0;
  std::string objective;  // method actually optimized (after any degradation)
  bool degraded = false;
  std::string note;  // degradation reason when degraded

  double class_accuracy(int c) const {
    const auto& t = tally.at(c);
    if (t.total == 0) throw EmptyEvalError("class " + std::to_string(c) + " has no test examples");
    return static_cast<double>(t.correct) / static_cast<double>(t.total);
  }
};

template <class S>
struct TrainState {
  CnnParams<S> params;
  std::optional<TeacherSnapshot<S>> teacher;
  std::vector<FisherAnchor<S>> anchors;
  std::set<int> seen;
  Rng train_rng{0};  // replaced with the seed's train stream before use
  Method method = Method::plain;
  Hyper hyper;
  Eq6Mode eq6 = Eq6Mode::single_count;
  // protocol bookkeeping
  std::set<int> current_classes;          // class set of the task in progress
  int current_task = 0;
  std::vector<std::size_t> task_indices;  // train indices consumed by that task
};

namespace detail {

// Mini-batch SGD over windows[order] for `epochs` epochs; shuffle and
// dropout masks come off state.train_rng in a fixed sequence. Returns the
// mean objective over the last epoch.
template <class S>
double train_epochs(TrainState<S>& st, const Tensor<S>& windows, const std::vector<int>& labels,
                    const std::vector<std::size_t>& idx, const LossSpec<S>& spec,
                    std::size_t epochs, double lr, const std::string& where) {
  const auto& sh = st.params.shape;
  const std::size_t B = st.hyper.batch_size;
  const std::size_t CL = sh.channels * sh.length;
  std::vector<std::size_t> order(idx);
  Batch<S> batch;
  Gradients<S> g(sh);
  ObjectiveWorkspace<S> ws;
  double last_epoch_mean = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    st.train_rng.shuffle(order);
    double sum = 0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t n = std::min(B, order.size() - start);
      if (batch.labels.size() != n) {
        batch.inputs = Tensor<S>({n, sh.channels, sh.length});
        batch.labels.resize(n);
      }
      for (std::size_t i = 0; i < n; ++i) {
        std::memcpy(batch.inputs.data() + i * CL, windows.data() + order[start + i] * CL,
                    CL * sizeof(S));
        batch.labels[i] = labels[order[start + i]];
      }
      LossBreakdown bd;
      try {
        bd = grad_total_loss(spec, st.params, batch, st.train_rng, st.hyper.dropout_rate, g, ws);
      } catch (const NumericError& err) {
        throw NumericError(where + ", epoch " + std::to_string(e + 1) + ": " + err.what());
      }
      sgd_step(st.params, g, lr);
      sum += bd.total;
      ++n_batches;
    }
    if (e + 1 == epochs) last_epoch_mean = sum / static_cast<double>(n_batches);
  }
  return last_epoch_mean;
}

}  // namespace detail

// One round: epochs_per_round of SGD on exactly this round's data, then a
// full evaluation over all seen classes on the test split.
template <class S>
RoundLog run_round(TrainState<S>& st, const RoundSpec& round, const HarDataset<S>& train,
                   const std::vector<std::size_t>& round_idx, const HarDataset<S>& test) {
  std::map<int, std::size_t> counts;
  for (std::size_t i : round_idx) counts[train.labels[i]]++;
  if (counts.size() != round.classes.size())
    throw StructuralError("round " + std::to_string(round.round) + " data covers " +
                          std::to_string(counts.size()) + " classes, schedule lists " +
                          std::to_string(round.classes.size()));
  for (int c : round.classes) {
    auto it = counts.find(c);
    if (it == counts.end() || it->second != round.per_class_n)
      throw StructuralError("round " + std::to_string(round.round) + ": class " +
                            std::to_string(c) + " has " +
                            std::to_string(it == counts.end() ? 0 : it->second) +
                            " samples, schedule wants " + std::to_string(round.per_class_n));
  }

  st.seen.insert(round.classes.begin(), round.classes.end());
  st.current_classes = round.classes;
  st.current_task = round.task;
  st.task_indices.insert(st.task_indices.end(), round_idx.begin(), round_idx.end());

  const auto resolved =
      resolve_loss_spec<S>(st.method, st.teacher ? &*st.teacher : nullptr, &st.anchors,
                           st.hyper.alpha, st.hyper.temperature, st.hyper.lambda, st.eq6);

  RoundLog log;
  log.round = round.round;
  log.task = round.task;
  log.trained = round.classes;
  log.epochs = st.hyper.epochs_per_round;
  log.objective = method_name(resolved.spec.method);
  log.degraded = resolved.degraded;
  log.note = resolved.degrade_reason;
  log.final_loss =
      detail::train_epochs(st, train.windows, train.labels, round_idx, resolved.spec,
                           st.hyper.epochs_per_round, st.hyper.learning_rate,
                           "round " + std::to_string(round.round));

  std::vector<std::size_t> eval_idx;
  for (std::size_t i = 0; i < test.labels.size(); ++i)
    if (st.seen.count(test.labels[i])) eval_idx.push_back(i);
  if (eval_idx.empty())
    throw EmptyEvalError("round " + std::to_string(round.round) +
                         ": test split has no examples of any seen class");
  log.tally = evaluate_per_class(st.params, test.windows, test.labels, eval_idx);
  long correct = 0, total = 0;
  for (const auto& t : log.tally) {
    correct += t.correct;
    total += t.total;
  }
  log.a_r = static_cast<double>(correct) / static_cast<double>(total);
  return log;
}

// Captures whatever regularizer state the method needs: a frozen teacher
// (lwf, ewclwf) and/or a Fisher anchor over the completed task's training
// samples (ewc, ewclwf).
template <class S>
void capture_regularizer_state(TrainState<S>& st, const HarDataset<S>& train) {
  if (st.current_task == 0) throw ProtocolError("nothing trained yet; no state to consolidate");
  if (st.method == Method::lwf || st.method == Method::ewclwf)
    st.teacher.emplace(st.params, st.seen, st.hyper.temperature);
  if (st.method == Method::ewc || st.method == Method::ewclwf) {
    FisherAnchor<S> a;
    a.task_id = st.current_task;
    a.anchor = st.params;
    a.fisher = estimate_diag_fisher(st.params, train.windows, train.labels, st.task_indices,
                                    st.hyper.fisher_n_max);
    a.lambda = st.hyper.lambda;
    a.validate();
    st.anchors.push_back(std::move(a));
  }
  st.task_indices.clear();
}

// Task-boundary consolidation; refuses to run when the upcoming round keeps
// the same class set.
template <class S>
void consolidate(TrainState<S>& st, const HarDataset<S>& train, const std::set<int>& next_classes) {
  if (st.current_task == 0) throw ProtocolError("nothing trained yet; no state to consolidate");
  if (next_classes == st.current_classes)
    throw ProtocolError("no task boundary is pending (next round trains the same classes)");
  capture_regularizer_state(st, train);
}

struct RunResult {
  std::vector<RoundLog> logs;
  std::vector<AccuracyRecord> records;
  std::vector<double> a_r;
  MetricsReport report;
  std::vector<int> consolidation_rounds;  // rounds after which state was captured
  std::vector<std::string> degradations;
  std::uint64_t final_checksum = 0;
};

// The full protocol: seeded init, balanced pretraining, six rounds with
// consolidation at task boundaries (or per round), metrics at the end.
template <class S>
RunResult run_scenario(const ScenarioSpec& scenario, Method method, const Hyper& hyper,
                       const HarData<S>& data, const CnnShape& shape = CnnShape{},
                       Eq6Mode eq6 = Eq6Mode::single_count, Eq9Mode eq9 = Eq9Mode::round_mean,
                       ConsolidationMode cmode = ConsolidationMode::task_boundary) {
  hyper.validate();
  scenario.validate();
  shape.validate();
  if (data.train.channels() != shape.channels || data.train.length() != shape.length ||
      data.test.channels() != shape.channels || data.test.length() != shape.length)
    throw StructuralError("dataset windows do not match the network input shape");
  for (int c : scenario.all_classes())
    if (static_cast<std::size_t>(c) >= shape.classes)
      throw StructuralError("scheduled class " + std::to_string(c) + " outside the head range");

  TrainState<S> st;
  {
    Rng init_rng = Rng::stream(hyper.seed, streams::init);
    st.params = he_init<S>(shape, init_rng);
  }
  st.train_rng = Rng::stream(hyper.seed, streams::train);
  st.method = method;
  st.hyper = hyper;
  st.eq6 = eq6;

  SamplePool pool(data.train.labels, static_cast<int>(shape.classes),
                  Rng::stream(hyper.seed, streams::sampling));

  RunResult out;

  // Balanced pretraining with plain CE; every method starts from the same
  // seed-determined snapshot because nothing here depends on the method.
  const auto pre_idx = pool.pretrain_subset(hyper.pretrain_per_class);
  if (!pre_idx.empty()) {
    LossSpec<S> plain_spec;
    plain_spec.alpha = hyper.alpha;
    plain_spec.temperature = hyper.temperature;
    plain_spec.lambda = hyper.lambda;
    detail::train_epochs(st, data.train.windows, data.train.labels, pre_idx, plain_spec,
                         hyper.pretrain_epochs, hyper.pretrain_lr, "pretraining");
  }

  for (std::size_t i = 0; i < scenario.rounds.size(); ++i) {
    const RoundSpec& round = scenario.rounds[i];
    std::vector<std::size_t> idx;
    try {
      idx = pool.sample_round(round.classes, round.per_class_n);
    } catch (const ExhaustionError& e) {
      throw ExhaustionError("round " + std::to_string(round.round) + ": " + e.what());
    }
    RoundLog log = run_round(st, round, data.train, idx, data.test);
    if (log.degraded)
      out.degradations.push_back("round " + std::to_string(round.round) + ": " + log.note);

    // accuracy on every task seen so far, straight off this round's tallies
    for (int d = 1; d <= round.task; ++d) {
      long c = 0, t = 0;
      for (int cls : scenario.task_classes(d)) {
        c += log.tally[cls].correct;
        t += log.tally[cls].total;
      }
      if (t == 0)
        throw EmptyEvalError("task " + std::to_string(d) + " has no test examples");
      out.records.push_back({round.round, d, static_cast<double>(c) / static_cast<double>(t)});
    }
    out.a_r.push_back(log.a_r);
    out.logs.push_back(std::move(log));

    if (i + 1 < scenario.rounds.size()) {
      const bool boundary = scenario.rounds[i + 1].classes != round.classes;
      if (cmode == ConsolidationMode::every_round) {
        capture_regularizer_state(st, data.train);
        out.consolidation_rounds.push_back(round.round);
      } else if (boundary) {
        consolidate(st, data.train, scenario.rounds[i + 1].classes);
        out.consolidation_rounds.push_back(round.round);
      }
    }
  }

  out.report = build_metrics_report(out.records, out.a_r, scenario.round_to_task(), eq9);
  out.final_checksum = st.params.checksum();
  return out;
}

// Just the seed-determined starting point of run_scenario — He init plus the
// balanced plain-CE pretraining pass — without touching the round schedule.
// The embedding export works from this snapshot.
template <class S>
CnnParams<S> pretrain_snapshot(const Hyper& hyper, const HarDataset<S>& train,
                               const CnnShape& shape = CnnShape{}) {
  hyper.validate();
  shape.validate();
  if (train.channels() != shape.channels || train.length() != shape.length)
    throw StructuralError("dataset windows do not match the network input shape");
  TrainState<S> st;
  {
    Rng init_rng = Rng::stream(hyper.seed, streams::init);
    st.params = he_init<S>(shape, init_rng);
  }
  st.train_rng = Rng::stream(hyper.seed, streams::train);
  st.hyper = hyper;
  SamplePool pool(train.labels, static_cast<int>(shape.classes),
                  Rng::stream(hyper.seed, streams::sampling));
  const auto pre_idx = pool.pretrain_subset(hyper.pretrain_per_class);
  if (!pre_idx.empty()) {
    LossSpec<S> plain_spec;
    plain_spec.alpha = hyper.alpha;
    plain_spec.temperature = hyper.temperature;
    plain_spec.lambda = hyper.lambda;
    detail::train_epochs(st, train.windows, train.labels, pre_idx, plain_spec,
                         hyper.pretrain_epochs, hyper.pretrain_lr, "pretraining");
  }
  return st.params;
}

// Second, independent metrics path: rebuilds the full report from the raw
// round logs alone — task ids re-derived from the trained class sets, task
// accuracies re-pooled from the per-class tallies, and the accuracy/forgetting
// arithmetic redone inline rather than through the metric ops.
inline MetricsReport recompute_report_from_logs(const std::vector<RoundLog>& logs,
                                                Eq9Mode eq9 = Eq9Mode::round_mean) {
  if (logs.empty()) throw StructuralError("no round logs to recompute from");
  std::vector<std::set<int>> sets;
  for (const auto& lg : logs) sets.push_back(lg.trained);
  const auto ids = derive_task_ids(sets);
  const int n_tasks = *std::max_element(ids.begin(), ids.end());
  std::vector<std::set<int>> task_cls(n_tasks);
  for (std::size_t i = 0; i < sets.size(); ++i) task_cls[ids[i] - 1] = sets[i];

  auto pooled = [](const RoundLog& lg, const std::set<int>& cls) {
    long c = 0, t = 0;
    for (int k : cls) {
      c += lg.tally.at(k).correct;
      t += lg.tally.at(k).total;
    }
    if (t == 0) throw EmptyEvalError("no test examples for the requested classes");
    return static_cast<double>(c) / static_cast<double>(t);
  };

  MetricsReport rep;
  rep.eq9 = eq9;
  rep.round_to_task = ids;

  std::set<int> seen;
  double a_sum = 0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    seen.insert(sets[i].begin(), sets[i].end());
    rep.a_r.push_back(pooled(logs[i], seen));
    a_sum += rep.a_r.back();
  }
  rep.A = a_sum / static_cast<double>(logs.size());

  for (int t = 1; t <= n_tasks; ++t) {
    std::vector<double> row;
    for (int d = 1; d <= t; ++d) {
      double sum = 0;
      int n = 0, last_round = -1;
      double last_val = 0;
      for (std::size_t i = 0; i < logs.size(); ++i) {
        if (ids[i] != t) continue;
        const double v = pooled(logs[i], task_cls[d - 1]);
        sum += v;
        ++n;
        if (logs[i].round > last_round) {
          last_round = logs[i].round;
          last_val = v;
        }
      }
      if (n == 0) throw StructuralError("no rounds train task " + std::to_string(t));
      row.push_back(eq9 == Eq9Mode::round_mean ? sum / static_cast<double>(n) : last_val);
    }
    double row_sum = 0;
    for (double v : row) row_sum += v;
    rep.A_t.push_back(row_sum / static_cast<double>(row.size()));
    rep.a.push_back(std::move(row));
  }

  for (int t = 2; t <= n_tasks; ++t) {
    std::vector<double> f;
    double f_sum = 0;
    for (int d = 1; d <= t - 1; ++d) {
      double best = rep.a[d - 1][d - 1];
      for (int i = d; i <= t - 1; ++i) best = std::max(best, rep.a[i - 1][d - 1]);
      f.push_back(best - rep.a[t - 1][d - 1]);
      f_sum += f.back();
    }
    rep.F_t.push_back(f_sum / static_cast<double>(t - 1));
    rep.f.push_back(std::move(f));
  }
  return rep;
}

}  // namespace harcl
