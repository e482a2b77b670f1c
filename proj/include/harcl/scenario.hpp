#pragma once
#include <set>
#include <string>
#include <vector>

#include "harcl/errors.hpp"

namespace harcl {

struct RoundSpec {
  int round = 0;  // 1-based
  std::set<int> classes;
  int task = 0;  // 1-based; bumps whenever the class set changes between rounds
  std::size_t per_class_n = 120;
};

// Task ids fall out of the class-set sequence: a new task starts exactly
// where the set changes.
inline std::vector<int> derive_task_ids(const std::vector<std::set<int>>& class_sets) {
  std::vector<int> ids;
  int t = 0;
  const std::set<int>* prev = nullptr;
  for (const auto& cs : class_sets) {
    if (!prev || cs != *prev) ++t;
    ids.push_back(t);
    prev = &cs;
  }
  return ids;
}

struct ScenarioSpec {
  int scenario = 0;
  int case_id = 0;  // 0 = the scenario has no case split
  std::vector<RoundSpec> rounds;

  std::string label() const {
    std::string s = "s" + std::to_string(scenario);
    if (case_id > 0) s += "c" + std::to_string(case_id);
    return s;
  }

  int task_count() const { return rounds.empty() ? 0 : rounds.back().task; }
  int consolidation_count() const { return rounds.empty() ? 0 : task_count() - 1; }

  std::vector<int> round_to_task() const {
    std::vector<int> m;
    for (const auto& r : rounds) m.push_back(r.task);
    return m;
  }

  std::set<int> task_classes(int t) const {
    for (const auto& r : rounds)
      if (r.task == t) return r.classes;
    throw StructuralError("no round trains task " + std::to_string(t));
  }

  std::set<int> all_classes() const {
    std::set<int> all;
    for (const auto& r : rounds) all.insert(r.classes.begin(), r.classes.end());
    return all;
  }

  void validate() const {
    if (rounds.size() != 6) throw StructuralError("a scenario holds exactly 6 rounds");
    std::vector<std::set<int>> sets;
    for (std::size_t i = 0; i < rounds.size(); ++i) {
      const auto& r = rounds[i];
      if (r.round != static_cast<int>(i) + 1) throw StructuralError("round indices must be 1..6");
      if (r.classes.empty()) throw StructuralError("round class set is empty");
      for (int c : r.classes)
        if (c < 0 || c > 5)
          throw StructuralError("class " + std::to_string(c) + " outside 0..5");
      if (r.per_class_n < 1) throw StructuralError("per-class sample count must be >= 1");
      sets.push_back(r.classes);
    }
    const auto ids = derive_task_ids(sets);
    for (std::size_t i = 0; i < rounds.size(); ++i)
      if (rounds[i].task != ids[i])
        throw StructuralError("task ids do not follow the class-set changes");
  }
};

// The benchmark's five class-incremental schedules. Scenario 2 has no case
// split; pass case_id 0 (or omit) for it.
inline ScenarioSpec build_scenario(int scenario_id, int case_id, std::size_t per_class_n = 120) {
  static const char* kValid = "valid: scenario 0 case 1|2, scenario 1 case 1|2, scenario 2";
  std::vector<std::set<int>> sets;
  if (scenario_id == 0 && case_id == 1)
    sets = {{0, 1}, {0, 1}, {0, 1}, {5}, {5}, {5}};
  else if (scenario_id == 0 && case_id == 2)
    sets = {{1, 2}, {1, 2}, {4}, {4}, {5}, {5}};
  else if (scenario_id == 1 && case_id == 1)
    sets = {{1, 4}, {1, 4}, {1, 4}, {5}, {5}, {5}};
  else if (scenario_id == 1 && case_id == 2)
    sets = {{2, 5}, {2, 5}, {2, 5}, {3}, {3}, {3}};
  else if (scenario_id == 2 && case_id == 0)
    sets = {{0, 1}, {0, 1}, {0, 1}, {2}, {2}, {2}};
  else if (scenario_id == 2)
    throw ConfigError("scenario 2 has no case split; " + std::string(kValid));
  else
    throw ConfigError("unknown scenario " + std::to_string(scenario_id) + " case " +
                      std::to_string(case_id) + "; " + kValid);

  ScenarioSpec spec;
  spec.scenario = scenario_id;
  spec.case_id = scenario_id == 2 ? 0 : case_id;
  const auto ids = derive_task_ids(sets);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    RoundSpec r;
    r.round = static_cast<int>(i) + 1;
    r.classes = sets[i];
    r.task = ids[i];
    r.per_class_n = per_class_n;
    spec.rounds.push_back(std::move(r));
  }
  spec.validate();
  return spec;
}

}  // namespace harcl
