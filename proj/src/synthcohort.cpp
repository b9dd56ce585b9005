#include "wearfuse/synthcohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wearfuse/errors.hpp"
#include "wearfuse/labeling.hpp"
#include "wearfuse/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wearfuse::synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("format_double failed");
  return std::string(buf, ptr);
}

SynthConfig default_synth_config() {
  SynthConfig cfg;
  cfg.base = {
      {"daily", {70.0, 8.0, 240.0}},
      {"pulse_ox", {97.0, 1.2, 360.0}},
      {"respiration", {15.0, 2.0, 360.0}},
      {"stress", {40.0, 12.0, 360.0}},
  };
  // The heart-rate group carries the strongest planted response.
  cfg.effect = {
      {"daily", 1.3},
      {"pulse_ox", 0.15},
      {"respiration", 0.15},
      {"stress", 0.5},
  };
  return cfg;
}

namespace {

std::string participant_name(std::size_t index) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "p%02zu", index + 1);
  return std::string(buf);
}

struct ParticipantData {
  std::vector<GroundTruthEvent> events;
  std::vector<labeling::SelfReport> reports;
  // modality id -> csv body (excluding header)
  std::map<std::string, std::string> stream_rows;
};

ParticipantData synth_participant(const SynthConfig& cfg,
                                  const std::vector<timeline::ModalitySchema>& schema,
                                  std::uint64_t sub_seed) {
  Rng rng(sub_seed);
  const double horizon = cfg.days * 86400.0;

  ParticipantData out;

  // Stress events: homogeneous Poisson arrivals, uniform durations.
  const double rate_per_s = cfg.event_rate_per_day / 86400.0;
  std::vector<std::string> intensity_names;
  std::vector<double> intensity_weights;
  for (const auto& [name, w] : cfg.intensity_weights) {
    intensity_names.push_back(name);
    intensity_weights.push_back(w);
  }
  double t = rate_per_s > 0.0 ? rng.exponential(rate_per_s) : horizon + 1.0;
  while (t < horizon) {
    GroundTruthEvent ev;
    ev.t_start = t;
    ev.t_end = t + rng.uniform(cfg.event_duration_min_s, cfg.event_duration_max_s);
    ev.intensity = intensity_names[rng.categorical(intensity_weights)];
    out.events.push_back(ev);
    t += rng.exponential(rate_per_s);
  }

  // Self-reports: the event span shifted by a clamped jitter so the reported
  // midpoint stays inside the true span.
  for (const auto& ev : out.events) {
    const double duration = ev.t_end - ev.t_start;
    const double max_shift = std::min(cfg.report_jitter_s, 0.49 * duration);
    const double delta = rng.uniform(-max_shift, max_shift);
    labeling::SelfReport r;
    r.t_start = ev.t_start + delta;
    r.t_end = ev.t_end + delta;
    r.intensity = labeling::intensity_from_string(ev.intensity);
    out.reports.push_back(r);
  }

  // Streams: AR(1) noise around the modality mean, plus the planted shift
  // inside event spans.
  for (const auto& s : schema) {
    auto base_it = cfg.base.find(s.modality_id);
    if (base_it == cfg.base.end())
      throw ConfigError("synth config has no base statistics for modality '" + s.modality_id +
                        "'");
    const ModalityBase& base = base_it->second;
    double effect_units = 0.0;
    if (auto it = cfg.effect.find(s.modality_id); it != cfg.effect.end())
      effect_units = it->second;
    for (const auto& noise_mod : cfg.noise_modalities)
      if (noise_mod == s.modality_id) effect_units = 0.0;
    const double shift = effect_units * base.std;

    // Device gaps: non-overlapping spans where the modality records nothing.
    std::vector<std::pair<double, double>> gaps;
    if (cfg.dropout_fraction > 0.0) {
      double lost = 0.0;
      const double target = cfg.dropout_fraction * horizon;
      for (int attempts = 0; lost < target && attempts < 1000; ++attempts) {
        const double len = rng.uniform(cfg.dropout_gap_min_s, cfg.dropout_gap_max_s);
        if (len >= horizon) break;
        const double at = rng.uniform(0.0, horizon - len);
        bool overlaps = false;
        for (const auto& [g0, g1] : gaps)
          if (at < g1 && g0 < at + len) overlaps = true;
        if (overlaps) continue;
        gaps.emplace_back(at, at + len);
        lost += len;
      }
      std::sort(gaps.begin(), gaps.end());
    }
    auto in_gap = [&gaps](double ts) {
      for (const auto& [g0, g1] : gaps) {
        if (ts < g0) return false;
        if (ts <= g1) return true;
      }
      return false;
    };

    const std::size_t d = s.feature_count();
    const double innovation = base.std * std::sqrt(1.0 - cfg.ar_coeff * cfg.ar_coeff);
    std::vector<double> state(d);
    for (auto& v : state) v = base.mean + base.std * rng.normal();

    std::string rows;
    rows.reserve(static_cast<std::size_t>(horizon / base.period_s) * 16 * (d + 1));
    std::size_t next_event = 0;
    for (double ts = 0.0; ts < horizon; ts += base.period_s) {
      while (next_event < out.events.size() && out.events[next_event].t_end < ts) ++next_event;
      bool in_event = false;
      for (std::size_t e = next_event; e < out.events.size() && out.events[e].t_start <= ts; ++e) {
        if (ts >= out.events[e].t_start && ts <= out.events[e].t_end) {
          in_event = true;
          break;
        }
      }
      // The AR state advances through gaps so values stay continuous across
      // them; the rows are simply not written.
      std::string row = format_double(ts);
      for (std::size_t j = 0; j < d; ++j) {
        state[j] = base.mean + cfg.ar_coeff * (state[j] - base.mean) + innovation * rng.normal();
        row += ',';
        row += format_double(state[j] + (in_event ? shift : 0.0));
      }
      if (!in_gap(ts)) {
        rows += row;
        rows += '\n';
      }
    }
    out.stream_rows.emplace(s.modality_id, std::move(rows));
  }
  return out;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << content;
}

}  // namespace

GenerateSummary generate(const SynthConfig& cfg,
                         const std::vector<timeline::ModalitySchema>& schema,
                         double window_s, double stride_s, const fs::path& out_dir) {
  if (cfg.participants == 0) throw ConfigError("participant count must be positive");
  if (!(cfg.days > 0.0)) throw ConfigError("days must be positive");
  if (cfg.event_rate_per_day < 0.0) throw ConfigError("event rate must be non-negative");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<ParticipantData> data(cfg.participants);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (long long i = 0; i < static_cast<long long>(cfg.participants); ++i) {
    data[static_cast<std::size_t>(i)] =
        synth_participant(cfg, schema, Rng::derive(cfg.seed, static_cast<std::uint64_t>(i)));
  }

  GenerateSummary summary;
  summary.participants = cfg.participants;

  json ground;
  ground["seed"] = cfg.seed;
  json per_participant = json::object();

  for (std::size_t i = 0; i < cfg.participants; ++i) {
    const std::string pid = participant_name(i);
    const fs::path dir = out_dir / pid;
    fs::create_directories(dir);

    for (const auto& s : schema) {
      std::string header = "timestamp";
      for (const auto& f : s.feature_names) header += "," + f;
      write_text(dir / (s.modality_id + ".csv"), header + "\n" + data[i].stream_rows.at(s.modality_id));
    }

    std::string reports = "t_start,t_end,intensity\n";
    for (const auto& r : data[i].reports) {
      reports += format_double(r.t_start) + "," + format_double(*r.t_end) + "," +
                 labeling::to_string(r.intensity) + "\n";
    }
    write_text(dir / "reports.csv", reports);

    json events = json::array();
    for (const auto& ev : data[i].events) {
      events.push_back(
          {{"t_start", ev.t_start}, {"t_end", ev.t_end}, {"intensity", ev.intensity}});
      ++summary.events;
    }
    per_participant[pid] = std::move(events);
    summary.events_by_participant[pid] = data[i].events;
  }

  // Label balance over the window grid the pipeline will use.
  std::size_t stressed = 0;
  for (std::size_t i = 0; i < cfg.participants; ++i) {
    auto signal = labeling::build_signal(participant_name(i), data[i].reports);
    double hi = 0.0;
    for (const auto& s : schema) {
      auto it = cfg.base.find(s.modality_id);
      const double period = it->second.period_s;
      const double horizon = cfg.days * 86400.0;
      const double last_sample = std::floor((horizon - 1e-9) / period) * period;
      hi = std::max(hi, last_sample);
    }
    for (double t0 = 0.0; t0 + window_s <= hi + 1e-9; t0 += stride_s) {
      ++summary.episodes;
      if (labeling::label_at(signal, t0 + window_s)) ++stressed;
    }
  }
  summary.stressed_fraction =
      summary.episodes ? static_cast<double>(stressed) / static_cast<double>(summary.episodes)
                       : 0.0;

  ground["participants"] = std::move(per_participant);
  ground["episodes_scanned"] = summary.episodes;
  ground["stressed_fraction"] = summary.stressed_fraction;
  write_text(out_dir / "ground_truth.json", ground.dump(1) + "\n");
  return summary;
}

void corrupt_modality(const fs::path& cohort_dir, const std::string& modality_id, CorruptMode mode,
                      double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw ConfigError("fraction must lie in [0, 1]");
  if (!fs::is_directory(cohort_dir))
    throw DataError("cohort root is not a directory: " + cohort_dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(cohort_dir)) {
    if (!entry.is_directory()) continue;
    fs::path f = entry.path() / (modality_id + ".csv");
    if (fs::exists(f)) files.push_back(f);
  }
  if (files.empty())
    throw DataError("modality '" + modality_id + "' not found under " + cohort_dir.string());
  std::sort(files.begin(), files.end());

  std::uint64_t file_index = 0;
  for (const auto& file : files) {
    Rng rng(Rng::derive(seed, 0xc0de0000ULL + file_index++));
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    std::string header;
    std::getline(in, header);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) lines.push_back(line);
    }
    in.close();

    std::string out = header + "\n";
    if (mode == CorruptMode::drop) {
      for (const auto& l : lines) {
        if (rng.uniform() >= fraction) out += l + "\n";
      }
    } else {
      // column statistics for the noise magnitude
      std::vector<double> sum, sumsq;
      std::vector<std::vector<double>> parsed;
      for (const auto& l : lines) {
        std::vector<double> vals;
        std::size_t start = 0;
        while (start <= l.size()) {
          std::size_t comma = l.find(',', start);
          std::string cell =
              comma == std::string::npos ? l.substr(start) : l.substr(start, comma - start);
          double v = 0.0;
          auto [p, ec2] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
          if (ec2 != std::errc{} || p != cell.data() + cell.size())
            throw DataError(file.string() + ": not a number: '" + cell + "'");
          vals.push_back(v);
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
        if (sum.empty()) {
          sum.assign(vals.size(), 0.0);
          sumsq.assign(vals.size(), 0.0);
        }
        for (std::size_t j = 0; j < vals.size(); ++j) {
          sum[j] += vals[j];
          sumsq[j] += vals[j] * vals[j];
        }
        parsed.push_back(std::move(vals));
      }
      const double n = static_cast<double>(parsed.size());
      for (auto& vals : parsed) {
        const bool hit = rng.uniform() < fraction;
        std::string row = format_double(vals[0]);  // timestamps stay
        for (std::size_t j = 1; j < vals.size(); ++j) {
          double v = vals[j];
          if (hit && n > 0) {
            const double mean = sum[j] / n;
            const double var = std::max(0.0, sumsq[j] / n - mean * mean);
            v = mean + 5.0 * std::sqrt(var) * rng.normal();
          }
          row += "," + format_double(v);
        }
        out += row + "\n";
      }
    }
    write_text(file, out);
  }
}

}  // namespace wearfuse::synth
