#pragma once
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "harcl/errors.hpp"
#include "harcl/har_data.hpp"
#include "harcl/rng.hpp"

namespace harcl {

// Writes a synthetic dataset in the exact UCI HAR on-disk layout: 9 signal
// files per split plus y_/subject_ files. Classes are distinguishable
// (class-specific frequencies and per-channel amplitude patterns) and the
// channel scales are deliberately uneven so normalization matters. Output is
// byte-deterministic in (spec, seed).
struct SynthSpec {
  std::size_t train_per_class = 400;
  std::size_t test_per_class = 50;
  std::uint64_t seed = 7;
};

namespace detail {

// One window of one class on one channel: two class-keyed harmonics plus
// noise, shifted/scaled per channel family.
inline void synth_window(int cls, std::size_t channel, double phase, Rng& rng, double* out) {
  const double freq = 1.0 + 0.9 * cls;
  const double amp = 0.3 + 0.07 * static_cast<double>((channel * 7 + cls * 3) % 10);
  const double offset = channel < 3 ? 0.0 : (channel < 6 ? 0.05 : 1.0);
  const double scale = channel >= 6 ? 0.25 : 1.0;  // total_acc rides near 1 g
  for (std::size_t t = 0; t < kHarWindowLen; ++t) {
    const double x = static_cast<double>(t) / static_cast<double>(kHarWindowLen);
    double v = amp * std::sin(2.0 * M_PI * freq * x + phase);
    if (cls % 2 == 1) v += 0.4 * amp * std::sin(4.0 * M_PI * freq * x + 2.0 * phase);
    v += 0.15 * rng.uniform(-1.0, 1.0);
    out[t] = offset + scale * v;
  }
}

inline void write_rows(const std::filesystem::path& path,
                       const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  char buf[32];
  std::string line;
  for (const auto& row : rows) {
    line.clear();
    for (double v : row) {
      std::snprintf(buf, sizeof buf, " %.7e", v);
      line += buf;
    }
    line += '\n';
    out << line;
  }
}

inline void write_split(const std::filesystem::path& root, const std::string& split,
                        std::size_t per_class, Rng& rng) {
  namespace fs = std::filesystem;
  const fs::path base = root / split;
  fs::create_directories(base / "Inertial Signals");

  const std::size_t n = per_class * kHarClasses;
  const auto names = har_signal_names(false);
  // windows[n][c][t]; class order round-robin so labels are interleaved
  std::vector<int> labels(n);
  std::vector<std::vector<std::vector<double>>> sig(
      names.size(), std::vector<std::vector<double>>(n, std::vector<double>(kHarWindowLen)));
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % kHarClasses);
    labels[i] = cls;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (std::size_t c = 0; c < names.size(); ++c)
      synth_window(cls, c, phase, rng, sig[c][i].data());
  }

  for (std::size_t c = 0; c < names.size(); ++c)
    write_rows(base / "Inertial Signals" / (names[c] + "_" + split + ".txt"), sig[c]);

  std::ofstream y(base / ("y_" + split + ".txt"));
  std::ofstream s(base / ("subject_" + split + ".txt"));
  if (!y || !s) throw IngestError("cannot write label/subject files under " + base.string());
  for (std::size_t i = 0; i < n; ++i) {
    y << (labels[i] + 1) << '\n';
    s << (i % 30 + 1) << '\n';
  }
}

}  // namespace detail

inline void write_synth_har(const std::string& root, const SynthSpec& spec = {}) {
  if (spec.train_per_class == 0 || spec.test_per_class == 0)
    throw ConfigError("synthetic dataset needs at least one window per class and split");
  Rng rng(spec.seed);
  detail::write_split(root, "train", spec.train_per_class, rng);
  detail::write_split(root, "test", spec.test_per_class, rng);
}

}  // namespace harcl
