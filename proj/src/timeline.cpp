#include "wearfuse/timeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "wearfuse/errors.hpp"
#include "wearfuse/rng.hpp"

namespace wearfuse::timeline {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& s, const std::string& file, std::size_t lineno) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw DataError(file + ":" + std::to_string(lineno) + ": not a number: '" + s + "'");
  return v;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

ModalityStream load_stream(const fs::path& file, const std::string& participant,
                           const ModalitySchema& schema) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  ModalityStream stream;
  stream.participant_id = participant;
  stream.modality_id = schema.modality_id;
  stream.feature_names = schema.feature_names;

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError(file.string() + ": empty file (missing header)");
  ++lineno;
  auto header = split_csv_line(strip_cr(line));
  std::vector<std::string> expected{"timestamp"};
  expected.insert(expected.end(), schema.feature_names.begin(), schema.feature_names.end());
  if (header != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) want += (i ? "," : "") + expected[i];
    throw DataError(file.string() + ":1: header mismatch, expected '" + want + "'");
  }

  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != expected.size())
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(expected.size()) + " fields, got " +
                      std::to_string(cells.size()));
    Sample s;
    s.t = parse_number(cells[0], file.string(), lineno);
    s.features.reserve(cells.size() - 1);
    for (std::size_t i = 1; i < cells.size(); ++i)
      s.features.push_back(parse_number(cells[i], file.string(), lineno));
    stream.samples.push_back(std::move(s));
  }

  std::stable_sort(stream.samples.begin(), stream.samples.end(),
                   [](const Sample& a, const Sample& b) { return a.t < b.t; });
  for (std::size_t i = 1; i < stream.samples.size(); ++i) {
    if (stream.samples[i].t == stream.samples[i - 1].t)
      throw DataError(file.string() + ": duplicate timestamp " +
                      std::to_string(stream.samples[i].t));
  }
  return stream;
}

std::vector<labeling::SelfReport> load_reports(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<labeling::SelfReport> reports;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError(file.string() + ": empty file (missing header)");
  ++lineno;
  if (split_csv_line(strip_cr(line)) != std::vector<std::string>{"t_start", "t_end", "intensity"})
    throw DataError(file.string() + ":1: header mismatch, expected 't_start,t_end,intensity'");
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 3)
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    labeling::SelfReport r;
    r.t_start = parse_number(cells[0], file.string(), lineno);
    if (!cells[1].empty()) {
      r.t_end = parse_number(cells[1], file.string(), lineno);
      if (*r.t_end < r.t_start)
        throw DataError(file.string() + ":" + std::to_string(lineno) + ": t_end before t_start");
    }
    try {
      r.intensity = labeling::intensity_from_string(cells[2]);
    } catch (const DataError& e) {
      throw DataError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    reports.push_back(r);
  }
  return reports;
}

}  // namespace

Cohort load_cohort(const fs::path& root, const std::vector<ModalitySchema>& schema,
                   std::vector<std::string>* warnings) {
  if (!fs::is_directory(root)) throw DataError("cohort root is not a directory: " + root.string());
  Cohort cohort;
  cohort.schema = schema;

  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());

  for (const auto& dir : dirs) {
    Participant p;
    p.id = dir.filename().string();

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
      if (file.extension() != ".csv") continue;
      const std::string stem = file.stem().string();
      if (stem == "reports") {
        p.reports = load_reports(file);
        continue;
      }
      const ModalitySchema* ms = nullptr;
      for (const auto& s : schema) {
        if (s.modality_id == stem) {
          ms = &s;
          break;
        }
      }
      if (!ms) throw DataError("unknown modality file: " + file.string());
      p.streams.emplace(stem, load_stream(file, p.id, *ms));
    }
    if (p.streams.empty() && warnings)
      warnings->push_back("participant '" + p.id + "' has no modality streams");
    cohort.participants.push_back(std::move(p));
  }
  return cohort;
}

void assign_split(Cohort& cohort, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw ConfigError("test_fraction must lie in [0, 1)");
  std::vector<std::string> ids;
  for (const auto& p : cohort.participants) ids.push_back(p.id);
  std::sort(ids.begin(), ids.end());
  Rng rng(Rng::derive(seed, 0x5114ULL));
  rng.shuffle(ids);
  const std::size_t n_test =
      static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(ids.size())));
  cohort.split.clear();
  for (std::size_t i = 0; i < ids.size(); ++i)
    cohort.split[ids[i]] = i < n_test ? Split::test : Split::train;
}

Tensor resample_window(const ModalityStream& stream, double t_start, double t_end,
                       const ModalitySchema& schema) {
  if (!(t_start < t_end)) throw DataError("resample_window: t_start must precede t_end");
  const std::size_t rows = schema.window_steps;
  const std::size_t d = schema.feature_count();
  const double step = schema.resample_step_s;
  Tensor out{Shape{rows, d + 1}};

  const auto& samples = stream.samples;
  for (std::size_t i = 0; i < rows; ++i) {
    const double grid_t = t_start + static_cast<double>(i) * step;
    double* row = out.data() + i * (d + 1);

    // Nearest sample within half a step wins (ties to the earlier sample);
    // otherwise carry the last earlier sample forward with indicator 1.
    auto right = std::lower_bound(samples.begin(), samples.end(), grid_t,
                                  [](const Sample& s, double t) { return s.t < t; });
    const Sample* best = nullptr;
    double best_dist = step / 2.0;
    if (right != samples.end()) {
      const double dist = std::abs(right->t - grid_t);
      if (dist <= best_dist) {
        best = &*right;
        best_dist = dist;
      }
    }
    if (right != samples.begin()) {
      const Sample* left = &*std::prev(right);
      const double dist = std::abs(grid_t - left->t);
      if (dist <= best_dist) {  // ties prefer the earlier sample
        best = left;
        best_dist = dist;
      }
    }

    if (best) {
      for (std::size_t j = 0; j < d; ++j) row[j] = best->features[j];
      row[d] = 0.0;
    } else if (right != samples.begin()) {
      const Sample* last = &*std::prev(right);
      for (std::size_t j = 0; j < d; ++j) row[j] = last->features[j];
      row[d] = 1.0;
    } else {
      for (std::size_t j = 0; j <= d; ++j) row[j] = 0.0;
      row[d] = 1.0;
    }
  }
  return out;
}

std::vector<Episode> extract_episodes(const Cohort& cohort, double window_s, double stride_s) {
  if (!(window_s > 0.0) || !(stride_s > 0.0))
    throw ConfigError("window and stride must be positive");
  for (const auto& s : cohort.schema) {
    const double covered = s.resample_step_s * static_cast<double>(s.window_steps);
    if (std::abs(covered - window_s) > 1e-6)
      throw ConfigError("schema '" + s.modality_id + "' covers " + std::to_string(covered) +
                        " s per window but the episode window is " + std::to_string(window_s) +
                        " s");
  }

  std::vector<Episode> episodes;
  for (const auto& p : cohort.participants) {
    if (p.streams.empty()) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [id, stream] : p.streams) {
      if (stream.samples.empty()) continue;
      lo = std::min(lo, stream.samples.front().t);
      hi = std::max(hi, stream.samples.back().t);
    }
    if (!(lo < hi)) continue;

    for (double t0 = lo; t0 + window_s <= hi + 1e-9; t0 += stride_s) {
      const double t1 = t0 + window_s;
      bool any_sample = false;
      for (const auto& [id, stream] : p.streams) {
        auto it = std::lower_bound(stream.samples.begin(), stream.samples.end(), t0,
                                   [](const Sample& s, double t) { return s.t < t; });
        if (it != stream.samples.end() && it->t < t1) {
          any_sample = true;
          break;
        }
      }
      if (!any_sample) continue;

      Episode e;
      e.participant_id = p.id;
      e.t_start = t0;
      e.t_end = t1;
      for (const auto& schema : cohort.schema) {
        static const ModalityStream empty_stream{};
        auto it = p.streams.find(schema.modality_id);
        const ModalityStream& stream = it != p.streams.end() ? it->second : empty_stream;
        e.windows.emplace(schema.modality_id, resample_window(stream, t0, t1, schema));
      }
      episodes.push_back(std::move(e));
    }
  }
  return episodes;
}

Normalizer fit_normalizer(const std::vector<Episode>& train_episodes,
                          const std::vector<ModalitySchema>& schema) {
  Normalizer norm;
  for (const auto& s : schema) {
    const std::size_t d = s.feature_count();
    std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
    std::size_t count = 0;
    for (const auto& e : train_episodes) {
      auto it = e.windows.find(s.modality_id);
      if (it == e.windows.end()) continue;
      const Tensor& w = it->second;
      for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          const double v = w.at2(r, j);
          sum[j] += v;
          sumsq[j] += v * v;
        }
        ++count;
      }
    }
    std::vector<Normalizer::FeatureStats> stats(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (count == 0) continue;
      const double mean = sum[j] / static_cast<double>(count);
      const double var = std::max(0.0, sumsq[j] / static_cast<double>(count) - mean * mean);
      stats[j].mean = mean;
      stats[j].std = std::sqrt(var);
    }
    norm.by_modality[s.modality_id] = std::move(stats);
  }
  return norm;
}

void apply_normalizer(std::vector<Episode>& episodes, const Normalizer& normalizer) {
  for (auto& e : episodes) {
    for (auto& [modality, w] : e.windows) {
      auto it = normalizer.by_modality.find(modality);
      if (it == normalizer.by_modality.end())
        throw DataError("normalizer has no statistics for modality '" + modality + "'");
      const auto& stats = it->second;
      const std::size_t d = stats.size();
      for (std::size_t r = 0; r < w.rows(); ++r) {
        for (std::size_t j = 0; j < d; ++j) {
          double v = w.at2(r, j) - stats[j].mean;
          if (stats[j].std >= kDegenerateStd) v /= stats[j].std;
          w.at2(r, j) = v;  // indicator column left untouched
        }
      }
    }
  }
}

void label_episodes(std::vector<Episode>& episodes, const Cohort& cohort) {
  std::map<std::string, labeling::SupervisionSignal> signals;
  for (const auto& p : cohort.participants)
    signals.emplace(p.id, labeling::build_signal(p.id, p.reports));
  for (auto& e : episodes) {
    auto it = signals.find(e.participant_id);
    if (it == signals.end()) throw DataError("episode for unknown participant " + e.participant_id);
    e.label = labeling::label_at(it->second, e.t_end);
  }
}

}  // namespace wearfuse::timeline
