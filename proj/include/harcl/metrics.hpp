#pragma once
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "harcl/errors.hpp"

namespace harcl {

// One measurement: accuracy on task d's test classes, model state after
// round r. The full set of these is the raw material for every metric.
struct AccuracyRecord {
  int round = 0;  // 1-based
  int task = 0;   // d, 1-based
  double accuracy = 0;
};

// How a_{t,d} folds the rounds of task t: mean over all of them (the
// default) or just the last one.
enum class Eq9Mode { round_mean, final_round };

inline const char* eq9_mode_name(Eq9Mode m) {
  return m == Eq9Mode::round_mean ? "round-mean" : "final-round";
}

// A = (1/R) sum a_r.
inline double overall_average_accuracy(const std::vector<double>& a_r) {
  if (a_r.empty()) throw StructuralError("overall average accuracy needs at least one a_r");
  double sum = 0;
  for (double a : a_r) {
    if (!(a >= 0.0 && a <= 1.0))
      throw StructuralError("a_r value " + std::to_string(a) + " outside [0,1]");
    sum += a;
  }
  return sum / static_cast<double>(a_r.size());
}

// a_{t,d}: accuracy on task d's test classes folded over the rounds that
// trained task t. Records may arrive in any order; rounds are folded in
// ascending round order regardless.
inline double task_accuracy(const std::vector<AccuracyRecord>& records, int t, int d,
                            const std::vector<int>& round_to_task,
                            Eq9Mode mode = Eq9Mode::round_mean) {
  if (d < 1 || t < d) throw StructuralError("task_accuracy needs t >= d >= 1");
  std::vector<int> rounds;
  for (std::size_t i = 0; i < round_to_task.size(); ++i)
    if (round_to_task[i] == t) rounds.push_back(static_cast<int>(i) + 1);
  if (rounds.empty())
    throw StructuralError("no round trains task " + std::to_string(t));
  if (mode == Eq9Mode::final_round) rounds.assign(1, rounds.back());
  double sum = 0;
  std::string missing;
  for (int r : rounds) {
    int hits = 0;
    for (const auto& rec : records) {
      if (rec.round == r && rec.task == d) {
        sum += rec.accuracy;
        ++hits;
      }
    }
    if (hits == 0) missing += (missing.empty() ? "" : ",") + std::to_string(r);
    if (hits > 1)
      throw StructuralError("duplicate accuracy record for round " + std::to_string(r) +
                            ", task " + std::to_string(d));
  }
  if (!missing.empty())
    throw StructuralError("a_{" + std::to_string(t) + "," + std::to_string(d) +
                          "} missing rounds " + missing);
  return sum / static_cast<double>(rounds.size());
}

// A_t = (1/t) sum_{d=1..t} a_{t,d}, given the complete row.
inline double average_accuracy_at_task(const std::vector<double>& a_td_row) {
  if (a_td_row.empty()) throw StructuralError("A_t needs the full a_{t,d} row");
  double sum = 0;
  for (double a : a_td_row) sum += a;
  return sum / static_cast<double>(a_td_row.size());
}

// Rows of a_{t,d}: entry [t-1][d-1], each row t-1 holding d = 1..t.
using AccuracyMatrix = std::vector<std::vector<double>>;

// f_{t,d} = max_{i in d..t-1} a_{i,d} - a_{t,d}; F_t = mean over d < t.
// Negative values (backward transfer) pass through unclamped.
inline std::pair<std::vector<double>, double> forgetting(const AccuracyMatrix& a, int t) {
  if (t < 2) throw MetricError("forgetting is undefined before a second task (t >= 2)");
  if (a.size() < static_cast<std::size_t>(t))
    throw StructuralError("accuracy matrix has no row for task " + std::to_string(t));
  std::vector<double> f(static_cast<std::size_t>(t) - 1);
  double sum = 0;
  for (int d = 1; d <= t - 1; ++d) {
    double best = -1.0;
    for (int i = d; i <= t - 1; ++i) {
      if (a[i - 1].size() < static_cast<std::size_t>(d))
        throw StructuralError("accuracy matrix missing a_{" + std::to_string(i) + "," +
                              std::to_string(d) + "}");
      best = std::max(best, a[i - 1][d - 1]);
    }
    if (a[t - 1].size() < static_cast<std::size_t>(d))
      throw StructuralError("accuracy matrix missing a_{" + std::to_string(t) + "," +
                            std::to_string(d) + "}");
    f[d - 1] = best - a[t - 1][d - 1];
    sum += f[d - 1];
  }
  return {f, sum / static_cast<double>(t - 1)};
}

struct MetricsReport {
  std::vector<double> a_r;             // index r-1
  double A = 0;
  AccuracyMatrix a;                    // a[t-1][d-1]
  std::vector<double> A_t;             // index t-1
  std::vector<std::vector<double>> f;  // f[t-2] = (f_{t,1} .. f_{t,t-1})
  std::vector<double> F_t;             // index t-2
  std::vector<int> round_to_task;      // 1-based task per round
  Eq9Mode eq9 = Eq9Mode::round_mean;

  int task_count() const { return static_cast<int>(a.size()); }
};

inline MetricsReport build_metrics_report(const std::vector<AccuracyRecord>& records,
                                          const std::vector<double>& a_r,
                                          const std::vector<int>& round_to_task,
                                          Eq9Mode mode = Eq9Mode::round_mean) {
  MetricsReport rep;
  rep.a_r = a_r;
  rep.round_to_task = round_to_task;
  rep.eq9 = mode;
  rep.A = overall_average_accuracy(a_r);
  int n_tasks = 0;
  for (int t : round_to_task) n_tasks = std::max(n_tasks, t);
  for (int t = 1; t <= n_tasks; ++t) {
    std::vector<double> row;
    for (int d = 1; d <= t; ++d) row.push_back(task_accuracy(records, t, d, round_to_task, mode));
    rep.A_t.push_back(average_accuracy_at_task(row));
    rep.a.push_back(std::move(row));
  }
  for (int t = 2; t <= n_tasks; ++t) {
    auto [f_row, F] = forgetting(rep.a, t);
    rep.f.push_back(std::move(f_row));
    rep.F_t.push_back(F);
  }
  return rep;
}

}  // namespace harcl
