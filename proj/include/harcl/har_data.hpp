#pragma once
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "harcl/errors.hpp"
#include "harcl/rng.hpp"
#include "harcl/tensor.hpp"

namespace harcl {

// Fixed channel order. The 6-channel mode keeps the body acceleration and
// gyroscope signals and drops total_acc.
inline std::vector<std::string> har_signal_names(bool six_channels) {
  std::vector<std::string> names = {"body_acc_x",  "body_acc_y",  "body_acc_z",
                                    "body_gyro_x", "body_gyro_y", "body_gyro_z",
                                    "total_acc_x", "total_acc_y", "total_acc_z"};
  if (six_channels) names.resize(6);
  return names;
}

constexpr std::size_t kHarWindowLen = 128;
constexpr int kHarClasses = 6;
constexpr std::size_t kHarOfficialTotal = 10299;

template <class S>
struct HarDataset {
  std::string split;
  Tensor<S> windows;  // [N x C x 128]
  std::vector<int> labels;
  std::vector<int> subjects;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return windows.shape[1]; }
  std::size_t length() const { return windows.shape[2]; }
};

struct ChannelStats {
  std::vector<double> mean, stddev;
};

namespace detail {

// One row of whitespace-separated decimals, parsed in place.
inline std::vector<double> parse_row(const std::string& line, const std::string& file,
                                     std::size_t lineno) {
  std::vector<double> out;
  const char* p = line.c_str();
  while (*p) {
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p) {
      while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
      if (!*p) break;
      throw IngestError(file + ": line " + std::to_string(lineno) + ": unparseable value");
    }
    out.push_back(v);
    p = end;
  }
  return out;
}

inline std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("missing or unreadable file: " + path.string());
  return in;
}

// Reads one signal file into windows[:, channel, :]; returns the row count.
template <class S>
std::size_t read_signal_into(const std::filesystem::path& path, Tensor<S>* windows,
                             std::size_t channel, std::size_t n_channels) {
  auto in = open_or_throw(path);
  std::string line;
  std::size_t row = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto vals = parse_row(line, path.string(), lineno);
    if (vals.empty()) continue;  // tolerate a trailing blank line
    if (vals.size() != kHarWindowLen)
      throw IngestError(path.string() + ": line " + std::to_string(lineno) + ": " +
                        std::to_string(vals.size()) + " values, expected 128");
    if (windows) {
      if (row >= windows->shape[0])
        throw IngestError(path.string() + ": line " + std::to_string(lineno) +
                          ": more rows than the other signal files");
      S* dst = windows->data() + (row * n_channels + channel) * kHarWindowLen;
      for (std::size_t i = 0; i < kHarWindowLen; ++i) dst[i] = static_cast<S>(vals[i]);
    }
    ++row;
  }
  return row;
}

// Counts non-blank 128-value rows without storing them.
inline std::size_t count_signal_rows(const std::filesystem::path& path) {
  return read_signal_into<double>(path, nullptr, 0, 1);
}

inline std::vector<int> read_int_column(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto vals = parse_row(line, path.string(), lineno);
    if (vals.empty()) continue;
    if (vals.size() != 1)
      throw IngestError(path.string() + ": line " + std::to_string(lineno) +
                        ": expected a single value");
    out.push_back(static_cast<int>(vals[0]));
  }
  return out;
}

}  // namespace detail

// Loads one split's raw (un-normalized) windows in the fixed channel order,
// remapping labels 1..6 -> 0..5.
template <class S = double>
HarDataset<S> load_raw_split(const std::string& root, const std::string& split,
                             bool six_channels = false) {
  namespace fs = std::filesystem;
  if (split != "train" && split != "test")
    throw ConfigError("split must be 'train' or 'test', got '" + split + "'");
  const fs::path base = fs::path(root) / split;
  const fs::path signals_dir = base / "Inertial Signals";
  const auto names = har_signal_names(six_channels);
  const std::size_t C = names.size();

  const fs::path first = signals_dir / (names[0] + "_" + split + ".txt");
  const std::size_t N = detail::count_signal_rows(first);
  if (N == 0) throw IngestError(first.string() + ": no data rows");

  HarDataset<S> ds;
  ds.split = split;
  ds.windows = Tensor<S>({N, C, kHarWindowLen});
  for (std::size_t c = 0; c < C; ++c) {
    const fs::path p = signals_dir / (names[c] + "_" + split + ".txt");
    const std::size_t rows = detail::read_signal_into(p, &ds.windows, c, C);
    if (rows != N)
      throw IngestError(p.string() + ": " + std::to_string(rows) + " rows, expected " +
                        std::to_string(N) + " (from " + first.string() + ")");
  }

  const fs::path ypath = base / ("y_" + split + ".txt");
  ds.labels = detail::read_int_column(ypath);
  if (ds.labels.size() != N)
    throw IngestError(ypath.string() + ": " + std::to_string(ds.labels.size()) +
                      " labels for " + std::to_string(N) + " windows");
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] < 1 || ds.labels[i] > kHarClasses)
      throw IngestError(ypath.string() + ": line " + std::to_string(i + 1) + ": label " +
                        std::to_string(ds.labels[i]) + " outside 1..6");
    ds.labels[i] -= 1;
  }

  const fs::path spath = base / ("subject_" + split + ".txt");
  ds.subjects = detail::read_int_column(spath);
  if (ds.subjects.size() != N)
    throw IngestError(spath.string() + ": " + std::to_string(ds.subjects.size()) +
                      " subjects for " + std::to_string(N) + " windows");
  return ds;
}

// Per-channel mean/stddev over every value of the split (two-pass).
template <class S>
ChannelStats channel_stats(const HarDataset<S>& ds) {
  const std::size_t N = ds.size(), C = ds.channels(), L = ds.length();
  ChannelStats st;
  st.mean.assign(C, 0.0);
  st.stddev.assign(C, 0.0);
  const double count = static_cast<double>(N * L);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const S* w = ds.windows.data() + (n * C + c) * L;
      for (std::size_t i = 0; i < L; ++i) st.mean[c] += static_cast<double>(w[i]);
    }
  for (std::size_t c = 0; c < C; ++c) st.mean[c] /= count;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const S* w = ds.windows.data() + (n * C + c) * L;
      for (std::size_t i = 0; i < L; ++i) {
        const double d = static_cast<double>(w[i]) - st.mean[c];
        st.stddev[c] += d * d;
      }
    }
  for (std::size_t c = 0; c < C; ++c) {
    st.stddev[c] = std::sqrt(st.stddev[c] / count);
    if (st.stddev[c] < 1e-12) st.stddev[c] = 1.0;  // flat channel: leave it centered
  }
  return st;
}

template <class S>
void standardize(HarDataset<S>& ds, const ChannelStats& st) {
  const std::size_t N = ds.size(), C = ds.channels(), L = ds.length();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      S* w = ds.windows.data() + (n * C + c) * L;
      for (std::size_t i = 0; i < L; ++i)
        w[i] = static_cast<S>((static_cast<double>(w[i]) - st.mean[c]) / st.stddev[c]);
    }
}

template <class S>
struct HarData {
  HarDataset<S> train, test;
  ChannelStats stats;  // train-split statistics used for both
};

// Both splits, standardized with train-split statistics only.
template <class S = double>
HarData<S> load_har(const std::string& root, bool six_channels = false) {
  HarData<S> d;
  d.train = load_raw_split<S>(root, "train", six_channels);
  d.test = load_raw_split<S>(root, "test", six_channels);
  if (d.train.channels() != d.test.channels())
    throw IngestError("train/test channel counts differ");
  d.stats = channel_stats(d.train);
  standardize(d.train, d.stats);
  standardize(d.test, d.stats);
  return d;
}

// Single-split view of load_har (test normalization still needs the train
// statistics, so the train split is always read).
template <class S = double>
HarDataset<S> load_dataset(const std::string& root, const std::string& split,
                           bool six_channels = false) {
  if (split == "train") {
    HarDataset<S> ds = load_raw_split<S>(root, "train", six_channels);
    standardize(ds, channel_stats(ds));
    return ds;
  }
  return load_har<S>(root, six_channels).test;
}

struct IntegrityReport {
  std::size_t train_rows = 0, test_rows = 0;
  std::size_t channels = 0;
  std::array<long, kHarClasses> class_counts{};  // train + test, remapped labels
  bool standard_total = false;                   // train + test == 10299
  std::vector<std::string> notes;
};

// Structural pre-flight for a dataset directory: loads both splits raw (all
// layout errors surface as IngestError) and tallies what it saw.
inline IntegrityReport check_har_layout(const std::string& root, bool six_channels = false) {
  IntegrityReport rep;
  const auto train = load_raw_split<double>(root, "train", six_channels);
  const auto test = load_raw_split<double>(root, "test", six_channels);
  rep.train_rows = train.size();
  rep.test_rows = test.size();
  rep.channels = train.channels();
  for (int y : train.labels) rep.class_counts[y]++;
  for (int y : test.labels) rep.class_counts[y]++;
  rep.standard_total = rep.train_rows + rep.test_rows == kHarOfficialTotal;
  if (!rep.standard_total)
    rep.notes.push_back("total windows " + std::to_string(rep.train_rows + rep.test_rows) +
                        " (official UCI HAR has 10299)");
  for (int c = 0; c < kHarClasses; ++c)
    if (rep.class_counts[c] == 0)
      rep.notes.push_back("class " + std::to_string(c) + " has no examples");
  return rep;
}

// Hands out train-split indices without replacement: every index is issued
// at most once per scenario run, which is what makes each round's data (and
// the pretraining subset) disjoint.
class SamplePool {
 public:
  SamplePool(const std::vector<int>& labels, int n_classes, Rng rng)
      : rng_(std::move(rng)), avail_(n_classes), consumed_(n_classes) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= n_classes)
        throw StructuralError("label " + std::to_string(labels[i]) + " outside the pool's range");
      avail_[labels[i]].push_back(i);
    }
  }

  std::size_t remaining(int cls) const { return avail_.at(cls).size(); }
  const std::set<std::size_t>& consumed(int cls) const { return consumed_.at(cls); }

  // k_per_class draws for every class, concatenated in class order.
  std::vector<std::size_t> pretrain_subset(std::size_t k_per_class) {
    std::vector<std::size_t> out;
    if (k_per_class == 0) return out;
    for (int c = 0; c < static_cast<int>(avail_.size()); ++c) {
      auto picks = draw(c, k_per_class, "pretrain subset");
      out.insert(out.end(), picks.begin(), picks.end());
    }
    return out;
  }

  // per_class_n draws for each requested class, concatenated then shuffled.
  std::vector<std::size_t> sample_round(const std::set<int>& classes, std::size_t per_class_n) {
    std::vector<std::size_t> out;
    for (int c : classes) {
      auto picks = draw(c, per_class_n, "round sample");
      out.insert(out.end(), picks.begin(), picks.end());
    }
    rng_.shuffle(out);
    return out;
  }

 private:
  std::vector<std::size_t> draw(int cls, std::size_t k, const char* what) {
    auto& pool = avail_.at(cls);
    if (pool.size() < k)
      throw ExhaustionError(std::string(what) + ": class " + std::to_string(cls) + " needs " +
                            std::to_string(k) + " samples, only " + std::to_string(pool.size()) +
                            " unconsumed");
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t pick = rng_.below(pool.size());
      out.push_back(pool[pick]);
      consumed_[cls].insert(pool[pick]);
      pool[pick] = pool.back();
      pool.pop_back();
    }
    return out;
  }

  Rng rng_;
  std::vector<std::vector<std::size_t>> avail_;
  std::vector<std::set<std::size_t>> consumed_;
};

}  // namespace harcl
