// Copyright 2026 The colab-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Experiment orchestration behind the colab_lab command line.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "colab/config.hpp"
#include "colab/contextgen.hpp"
#include "colab/io.hpp"
#include "colab/log.hpp"
#include "colab/metatrain.hpp"
#include "colab/metrics.hpp"
#include "colab/synthdata.hpp"

namespace colab::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitIncomplete = 1, kExitInvalid = 2, kExitDiverged = 3 };

/// Directory name of an arm: "none", or "<kind>_t<t>".
inline std::string arm_label(ContextKind arm, std::size_t t) {
  return arm == ContextKind::kNone ? "none" : to_string(arm) + "_t" + std::to_string(t);
}

/// Context classes an arm actually uses (the dilated and oracle sources are fixed at two).
inline std::size_t effective_t(ContextKind arm, std::size_t t) {
  switch (arm) {
    case ContextKind::kNone: return 1;
    case ContextKind::kDilated:
    case ContextKind::kOracle: return 2;
    default: return t;
  }
}

inline fs::path run_dir(const fs::path& root, ContextKind arm, std::size_t t, std::uint64_t seed) {
  return root / arm_label(arm, effective_t(arm, t)) / ("seed_" + std::to_string(seed));
}

/// Accepts either a checkpoint directory or a run directory that contains one.
inline fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::exists(p / "manifest.json")) return p;
  if (fs::exists(p / "checkpoint" / "manifest.json")) return p / "checkpoint";
  throw IoError("no checkpoint found at " + p.string());
}

inline const std::vector<Case>& split_cases(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "test") return ds.test;
  throw ConfigError("unknown split '" + split + "' (expected train or test)");
}

inline std::string csv_line(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
  return s + "\n";
}

// ---------------------------------------------------------------------------
// Static context labels, cached next to the dataset

namespace detail {

inline std::mutex& cache_mutex() {
  static std::mutex mu;
  return mu;
}

inline Grid<std::uint8_t> argmax_channels(const Tensor& q) {
  const std::size_t t = q.dim(0), H = q.dim(1), W = q.dim(2), hw = H * W;
  Grid<std::uint8_t> lab(H, W, 0);
  for (std::size_t p = 0; p < hw; ++p) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < t; ++j)
      if (q[j * hw + p] > q[best * hw + p]) best = j;
    lab.data[p] = static_cast<std::uint8_t>(best);
  }
  return lab;
}

}  // namespace detail

/// Static context source for `kind`, reusing `<dataset>/context/<key>/` when its
/// manifest matches. Each field is stored as .ten plus an indexed argmax PGM.
inline ContextSource cached_context_source(ContextKind kind, std::size_t t, const ColabConfig& cfg, const Dataset& data,
                                           const fs::path& dataset_dir, std::uint64_t seed) {
  if (kind == ContextKind::kNone || kind == ContextKind::kColab) return build_context_source(kind, t, cfg, data, seed);
  nlohmann::ordered_json key;
  key["kind"] = to_string(kind);
  key["t"] = effective_t(kind, t);
  if (kind == ContextKind::kDilated) {
    key["m"] = cfg.m;
    key["tau"] = cfg.tau;
  }
  if (kind == ContextKind::kKmeans) {
    key["seed"] = seed;
    key["kmeans_restarts"] = cfg.kmeans_restarts;
  }
  std::string name = arm_label(kind, effective_t(kind, t));
  if (kind == ContextKind::kKmeans) name += "_seed" + std::to_string(seed);
  const fs::path dir = dataset_dir / "context" / name;
  const std::string manifest = key.dump(2) + "\n";

  std::lock_guard lock(detail::cache_mutex());
  if (fs::exists(dir / "manifest.json") && read_file(dir / "manifest.json") == manifest) {
    ContextSource src{kind, key["t"].get<std::size_t>(), {}, false};
    for (const Case& c : data.train) src.q.push_back(load_ten(dir / (case_stem(c.id) + ".ten")));
    return src;
  }
  ContextSource src = build_context_source(kind, t, cfg, data, seed);
  try {
    const fs::path tmp = dir.string() + ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const std::string stem = case_stem(data.train[i].id);
      save_ten(tmp / (stem + ".ten"), src.q[i]);
      write_pgm(tmp / (stem + ".pgm"), detail::argmax_channels(src.q[i]));
    }
    write_file_atomic(tmp / "manifest.json", manifest);
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  } catch (const std::exception& e) {
    log_warn(std::string("could not cache context labels: ") + e.what());
  }
  return src;
}

// ---------------------------------------------------------------------------
// gen-data

inline Dataset cmd_gen_data(const TaskSpec& spec, const fs::path& out) {
  Dataset ds = generate_task(spec);
  save_dataset(ds, out);
  log_info("wrote " + std::to_string(ds.train.size()) + " training and " + std::to_string(ds.test.size()) +
           " test cases to " + out.string());
  return ds;
}

// ---------------------------------------------------------------------------
// train

struct TrainRequest {
  fs::path dataset;
  fs::path out;
  ColabConfig config;
  ContextKind arm = ContextKind::kNone;
  std::size_t t = 2;
  std::uint64_t seed = 0;
  bool resume = false;
  std::size_t stop_after = 0;
};

/// Trains one arm/seed into `out` (metrics.csv, config.json, checkpoint/).
/// With `resume`, continues from out/checkpoint when it exists.
inline TrainState cmd_train(const TrainRequest& req) {
  const Dataset data = load_dataset(req.dataset);
  ColabConfig cfg = req.config;
  cfg.t = req.t;
  std::optional<TrainState> state;
  const fs::path ck_dir = req.out / "checkpoint";
  if (req.resume && fs::exists(ck_dir / "manifest.json")) {
    Checkpoint ck = load_checkpoint(ck_dir);
    if (ck.state.arm != req.arm || ck.state.seed != req.seed) {
      throw ConfigError("resume: checkpoint in " + ck_dir.string() + " is for arm " + to_string(ck.state.arm) +
                        " seed " + std::to_string(ck.state.seed));
    }
    cfg = ck.config;
    state = std::move(ck.state);
    log_info("resuming " + to_string(req.arm) + " seed " + std::to_string(req.seed) + " from epoch " +
             std::to_string(state->epoch));
  }
  cfg.validate();
  ContextSource source = req.arm == ContextKind::kColab
                             ? ContextSource{ContextKind::kColab, cfg.t, {}, true}
                             : cached_context_source(req.arm, cfg.t, cfg, data, req.dataset, req.seed);
  Trainer trainer(cfg, data, std::move(source));
  if (!state) state = trainer.init_state(req.seed);
  fs::create_directories(req.out);
  write_file_atomic(req.out / "config.json", nlohmann::json(cfg).dump(2) + "\n");
  trainer.run(*state, TrainOptions{req.out, req.stop_after, {}});
  return std::move(*state);
}

// ---------------------------------------------------------------------------
// eval

struct EvalRequest {
  fs::path checkpoint;
  fs::path dataset;
  fs::path out;
  std::string split = "test";
  bool postprocess = false;
  bool exclude_empty = false;
};

inline std::vector<std::string> eval_csv_header() {
  return {"case_id", "tp", "fp", "fn", "tn", "dsc", "sen", "prc", "hd95", "hd95_empty"};
}

/// Per-case metrics of a checkpoint on one split, written to out/eval_<split>[_pp].csv.
inline std::vector<MetricsRecord> cmd_eval(const EvalRequest& req) {
  const Checkpoint ck = load_checkpoint(resolve_checkpoint(req.checkpoint));
  const Dataset data = load_dataset(req.dataset);
  std::vector<MetricsRecord> rows = evaluate(ck.state.segmenter, split_cases(data, req.split), req.postprocess);
  std::size_t conventions = 0;
  for (const auto& r : rows) conventions += r.hd95_empty;
  if (conventions) {
    log_info(std::to_string(conventions) + " case(s) hit an empty-mask convention" +
             (req.exclude_empty ? " and were excluded" : ""));
  }
  if (req.exclude_empty) std::erase_if(rows, [](const MetricsRecord& r) { return r.hd95_empty; });

  std::string text = csv_line(eval_csv_header());
  for (const auto& r : rows) {
    text += csv_line({std::to_string(r.case_id), std::to_string(r.counts.tp), std::to_string(r.counts.fp),
                      std::to_string(r.counts.fn), std::to_string(r.counts.tn), fmt_float(r.dsc), fmt_float(r.sen),
                      fmt_float(r.prc), fmt_float(r.hd95), r.hd95_empty ? "1" : "0"});
  }
  fs::create_directories(req.out);
  write_file_atomic(req.out / ("eval_" + req.split + (req.postprocess ? "_pp" : "") + ".csv"), text);
  const MeanMetrics m = mean_metrics(rows);
  log_info("eval " + req.split + ": dsc " + fmt_float(m.dsc) + " sen " + fmt_float(m.sen) + " prc " +
           fmt_float(m.prc) + " hd95 " + fmt_float(m.hd95));
  return rows;
}

// ---------------------------------------------------------------------------
// export-logits

struct LogitsRequest {
  fs::path checkpoint;
  fs::path dataset;
  fs::path out;
  std::string split = "test";
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  double roi_share = 0.5;
};

inline std::vector<LogitSample> sample_logits(const SegNetwork& net, const std::vector<Case>& cases,
                                              std::size_t samples, std::uint64_t seed, double roi_share) {
  std::vector<Tensor> logits;
  std::vector<Mask> gt;
  for (const Case& c : cases) {
    const std::size_t H = c.image.dim(1), W = c.image.dim(2);
    Tensor z = predict_logits(net, c.image.reshaped(Shape{1, 1, H, W}));
    logits.push_back(z.reshaped(Shape{z.dim(1), H, W}));
    gt.push_back(c.roi);
  }
  Rng rng = Rng::keyed(seed, "export-logits");
  return export_logits(logits, gt, samples, rng, roi_share);
}

/// Stratified (label, z_roi, z_other) sample written to out/logits_<split>.csv.
inline std::vector<LogitSample> cmd_export_logits(const LogitsRequest& req) {
  const Checkpoint ck = load_checkpoint(resolve_checkpoint(req.checkpoint));
  const Dataset data = load_dataset(req.dataset);
  auto samples = sample_logits(ck.state.segmenter, split_cases(data, req.split), req.samples, req.seed, req.roi_share);
  std::string text = csv_line({"label", "z_roi", "z_other"});
  for (const auto& s : samples) text += csv_line({std::to_string(s.label), fmt_float(s.z_roi), fmt_float(s.z_other)});
  fs::create_directories(req.out);
  write_file_atomic(req.out / ("logits_" + req.split + ".csv"), text);
  log_info("background false-positive fraction " + fmt_float(background_fp_fraction(samples)));
  return samples;
}

// ---------------------------------------------------------------------------
// hist

struct HistRequest {
  fs::path dataset;
  fs::path out;
  fs::path checkpoint;  // learned arm only
  ColabConfig config;
  std::string split = "train";
  ContextKind arm = ContextKind::kNone;
  std::size_t t = 2;
  std::uint64_t seed = 0;
  std::size_t bins = 64;
};

/// Intensity histograms per label class: class 0 is the ROI, classes 1.. are the
/// arm's context labels (argmax of the extended label; plain background for none).
inline Histogram cmd_hist(const HistRequest& req) {
  const Dataset data = load_dataset(req.dataset);
  const std::vector<Case>& cases = split_cases(data, req.split);
  if (cases.empty()) throw ConfigError("hist: split '" + req.split + "' is empty");
  ColabConfig cfg = req.config;
  std::optional<SegNetwork> generator;
  ContextSource source;
  if (req.arm == ContextKind::kColab) {
    const Checkpoint ck = load_checkpoint(resolve_checkpoint(req.checkpoint));
    if (!ck.state.generator) throw ConfigError("hist: checkpoint has no task generator");
    generator = ck.state.generator;
    cfg = ck.config;
  } else if (req.arm != ContextKind::kNone) {
    if (req.split != "train") throw ConfigError("hist: static context labels exist for the training split only");
    source = cached_context_source(req.arm, req.t, cfg, data, req.dataset, req.seed);
  }
  const std::size_t classes = req.arm == ContextKind::kNone ? 2 : 1 + effective_t(req.arm, req.t);

  const std::size_t H = cases[0].roi.height, W = cases[0].roi.width;
  Grid<double> image(H * cases.size(), W);
  Grid<std::uint8_t> labels(H * cases.size(), W);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    Tensor target;
    if (generator) {
      const Tensor o = predict_logits(*generator, c.image.reshaped(Shape{1, 1, H, W}));
      target = make_targets({c.roi}, Var::constant(o), cfg.m, cfg.tau).value();
    } else if (req.arm != ContextKind::kNone) {
      const Tensor& q = source.q[i];
      target = aggregate_binary(one_hot_binary({c.roi}), Var::constant(q.reshaped(Shape{1, q.dim(0), H, W}))).value();
    } else {
      target = one_hot_binary({c.roi});
    }
    const Grid<std::uint8_t> lab = detail::argmax_channels(target.reshaped(Shape{classes, H, W}));
    std::copy(lab.data.begin(), lab.data.end(), labels.data.begin() + static_cast<std::ptrdiff_t>(i * H * W));
    std::copy(c.image.data().begin(), c.image.data().end(), image.data.begin() + static_cast<std::ptrdiff_t>(i * H * W));
  }
  const Histogram h = intensity_histogram(image, labels, classes, req.bins);
  std::string text = csv_line({"class", "bin", "lo", "hi", "freq"});
  const double width = (h.hi - h.lo) / static_cast<double>(req.bins);
  for (std::size_t k = 0; k < classes; ++k)
    for (std::size_t b = 0; b < req.bins; ++b) {
      const std::string name = k == 0 ? "roi" : (req.arm == ContextKind::kNone ? "background" : "context_" + std::to_string(k));
      text += csv_line({name, std::to_string(b), fmt_float(h.lo + width * static_cast<double>(b)),
                        fmt_float(h.lo + width * static_cast<double>(b + 1)), fmt_float(h.per_class[k][b])});
    }
  fs::create_directories(req.out);
  write_file_atomic(req.out / ("hist_" + req.split + ".csv"), text);
  return h;
}

// ---------------------------------------------------------------------------
// compare

struct PlanArm {
  ContextKind arm = ContextKind::kNone;
  std::size_t t = 2;
};

struct ExperimentPlan {
  fs::path dataset;
  fs::path out;
  ColabConfig config;
  std::vector<PlanArm> arms;
  std::vector<std::uint64_t> seeds;
};

/// Plan file: {"dataset", "out", "config" (object or path), "seeds", "arms": [{"arm", "t"}]}.
/// Relative paths resolve against the plan file's directory. An arm may repeat
/// "seeds", but it must equal the shared list so the comparison stays paired.
inline ExperimentPlan load_plan(const fs::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("plan " + file.string() + ": " + e.what());
  }
  const fs::path base = file.parent_path();
  auto path_of = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw ConfigError(std::string("plan.") + key + ": expected a path");
    const fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  ExperimentPlan plan;
  plan.dataset = path_of("dataset");
  plan.out = path_of("out");
  if (j.contains("config")) {
    const auto& c = j.at("config");
    if (c.is_string()) {
      const fs::path p = c.get<std::string>();
      plan.config = load_config(p.is_absolute() ? p : base / p);
    } else {
      plan.config = parse_config(c.dump());
    }
  }
  plan.seeds = plan.config.seeds;
  if (j.contains("seeds")) {
    try {
      plan.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("plan.seeds: expected a list of non-negative integers");
    }
  }
  if (plan.seeds.empty()) throw ConfigError("plan.seeds: must list at least one seed");
  if (!j.contains("arms") || !j.at("arms").is_array() || j.at("arms").empty()) {
    throw ConfigError("plan.arms: expected a non-empty list");
  }
  for (const auto& a : j.at("arms")) {
    PlanArm arm;
    if (!a.contains("arm") || !a.at("arm").is_string()) throw ConfigError("plan.arms[].arm: expected a string");
    arm.arm = parse_context_kind(a.at("arm").get<std::string>());
    arm.t = a.value("t", plan.config.t);
    if (a.contains("seeds") && a.at("seeds").get<std::vector<std::uint64_t>>() != plan.seeds) {
      throw ConfigError("plan.arms[" + to_string(arm.arm) + "].seeds: every arm must use the shared seed list");
    }
    plan.arms.push_back(arm);
  }
  return plan;
}

struct RunSummary {
  PlanArm arm;
  std::uint64_t seed = 0;
  bool complete = false;
  bool diverged = false;
  EpochRecord last;
  double bg_fp = 0.0;  // background false-positive fraction of test logits
};

struct ArmSummary {
  std::string label;
  std::size_t complete = 0;
  std::vector<std::uint64_t> missing;
  EpochRecord mean, median;
  double bg_fp_mean = 0.0, bg_fp_median = 0.0;
};

struct CompareResult {
  std::vector<RunSummary> runs;
  std::vector<ArmSummary> arms;
  bool diverged = false;
  bool complete() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunSummary& r) { return r.complete; });
  }
};

inline std::size_t thread_budget() {
  if (const char* env = std::getenv("COLAB_LAB_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    log_warn("ignoring invalid COLAB_LAB_THREADS value");
  }
  return 1;
}

/// Number of test samples drawn for the background false-positive statistic.
inline constexpr std::size_t kCompareLogitSamples = 20000;

namespace detail {

inline std::optional<EpochRecord> final_record(const fs::path& dir, std::size_t epochs) {
  const fs::path csv = dir / "metrics.csv";
  if (!fs::exists(csv) || !fs::exists(dir / "checkpoint" / "manifest.json")) return std::nullopt;
  const CsvTable t = read_csv(csv);
  const std::size_t e = t.column("epoch");
  for (const auto& row : t.rows) {
    if (std::stoul(row[e]) != epochs) continue;
    EpochRecord r;
    r.epoch = epochs;
    r.dsc = std::stod(row[t.column("dsc")]);
    r.sen = std::stod(row[t.column("sen")]);
    r.prc = std::stod(row[t.column("prc")]);
    r.hd95 = std::stod(row[t.column("hd95")]);
    r.loss_ce = std::stod(row[t.column("loss_ce")]);
    r.loss_dice = std::stod(row[t.column("loss_dice")]);
    r.loss_roi = std::stod(row[t.column("loss_roi")]);
    return r;
  }
  return std::nullopt;
}

inline double median_of(std::vector<double> v) { return v.empty() ? 0.0 : percentile(std::move(v), 0.5); }

}  // namespace detail

/// Summarizes every (arm, seed) run of the plan; with `run`, first trains the
/// missing ones (resuming partial runs) on up to COLAB_LAB_THREADS threads.
inline CompareResult cmd_compare(const ExperimentPlan& plan, bool run) {
  CompareResult res;
  for (const PlanArm& a : plan.arms)
    for (std::uint64_t s : plan.seeds) {
      RunSummary r;
      r.arm = a;
      r.seed = s;
      res.runs.push_back(r);
    }

  if (run) {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < res.runs.size(); ++i) {
      const RunSummary& r = res.runs[i];
      if (!detail::final_record(run_dir(plan.out, r.arm.arm, r.arm.t, r.seed), plan.config.epochs)) todo.push_back(i);
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next++; k < todo.size(); k = next++) {
        RunSummary& r = res.runs[todo[k]];
        TrainRequest req{plan.dataset, run_dir(plan.out, r.arm.arm, r.arm.t, r.seed), plan.config, r.arm.arm, r.arm.t,
                         r.seed, true, 0};
        try {
          cmd_train(req);
        } catch (const NumericError& e) {
          log(LogLevel::kError, arm_label(r.arm.arm, r.arm.t) + " seed " + std::to_string(r.seed) + ": " + e.what());
          r.diverged = true;
        }
      }
    };
    const std::size_t n = std::min(thread_budget(), todo.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  std::optional<Dataset> data;
  for (RunSummary& r : res.runs) {
    const fs::path dir = run_dir(plan.out, r.arm.arm, r.arm.t, r.seed);
    const auto last = detail::final_record(dir, plan.config.epochs);
    if (!last) continue;
    if (!data) data = load_dataset(plan.dataset);
    r.complete = true;
    r.last = *last;
    const Checkpoint ck = load_checkpoint(dir / "checkpoint");
    r.bg_fp = background_fp_fraction(sample_logits(ck.state.segmenter, data->test, kCompareLogitSamples, r.seed, 0.5));
  }
  res.diverged = std::any_of(res.runs.begin(), res.runs.end(), [](const RunSummary& r) { return r.diverged; });

  for (const PlanArm& a : plan.arms) {
    ArmSummary s;
    s.label = arm_label(a.arm, effective_t(a.arm, a.t));
    std::vector<double> dsc, sen, prc, hd, fp;
    for (const RunSummary& r : res.runs) {
      if (r.arm.arm != a.arm || r.arm.t != a.t) continue;
      if (!r.complete) {
        s.missing.push_back(r.seed);
        continue;
      }
      dsc.push_back(r.last.dsc);
      sen.push_back(r.last.sen);
      prc.push_back(r.last.prc);
      hd.push_back(r.last.hd95);
      fp.push_back(r.bg_fp);
    }
    s.complete = dsc.size();
    auto mean = [](const std::vector<double>& v) {
      double total = 0.0;
      for (double x : v) total += x;
      return v.empty() ? 0.0 : total / static_cast<double>(v.size());
    };
    s.mean.epoch = s.median.epoch = plan.config.epochs;
    s.mean.dsc = mean(dsc);
    s.mean.sen = mean(sen);
    s.mean.prc = mean(prc);
    s.mean.hd95 = mean(hd);
    s.median.dsc = detail::median_of(dsc);
    s.median.sen = detail::median_of(sen);
    s.median.prc = detail::median_of(prc);
    s.median.hd95 = detail::median_of(hd);
    s.bg_fp_mean = mean(fp);
    s.bg_fp_median = detail::median_of(fp);
    res.arms.push_back(std::move(s));
  }
  return res;
}

inline std::vector<std::string> summary_header() {
  return {"arm",        "seeds",      "complete",   "dsc_mean",   "sen_mean",   "prc_mean",    "hd95_mean",
          "bg_fp_mean", "dsc_median", "sen_median", "prc_median", "hd95_median", "bg_fp_median", "missing"};
}

inline std::vector<std::vector<std::string>> summary_rows(const CompareResult& res, std::size_t n_seeds) {
  std::vector<std::vector<std::string>> rows;
  for (const ArmSummary& s : res.arms) {
    std::string missing;
    for (std::uint64_t seed : s.missing) missing += (missing.empty() ? "" : ";") + std::to_string(seed);
    auto val = [&](double v) { return s.complete ? fmt_float(v) : std::string("MISSING"); };
    rows.push_back({s.label, std::to_string(n_seeds), std::to_string(s.complete), val(s.mean.dsc), val(s.mean.sen),
                    val(s.mean.prc), val(s.mean.hd95), val(s.bg_fp_mean), val(s.median.dsc), val(s.median.sen),
                    val(s.median.prc), val(s.median.hd95), val(s.bg_fp_median), missing.empty() ? "-" : missing});
  }
  return rows;
}

/// Writes runs.csv, summary.csv and summary.txt (aligned columns) under plan.out.
inline std::string write_compare_outputs(const ExperimentPlan& plan, const CompareResult& res) {
  std::string runs = csv_line({"arm", "seed", "complete", "epoch", "dsc", "sen", "prc", "hd95", "bg_fp"});
  for (const RunSummary& r : res.runs) {
    const std::string label = arm_label(r.arm.arm, effective_t(r.arm.arm, r.arm.t));
    if (!r.complete) {
      runs += csv_line({label, std::to_string(r.seed), "0", "MISSING", "MISSING", "MISSING", "MISSING", "MISSING",
                        "MISSING"});
      continue;
    }
    runs += csv_line({label, std::to_string(r.seed), "1", std::to_string(r.last.epoch), fmt_float(r.last.dsc),
                      fmt_float(r.last.sen), fmt_float(r.last.prc), fmt_float(r.last.hd95), fmt_float(r.bg_fp)});
  }
  const auto header = summary_header();
  const auto rows = summary_rows(res, plan.seeds.size());
  std::string csv = csv_line(header);
  for (const auto& row : rows) csv += csv_line(row);

  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream txt;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) txt << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << cells[i];
    txt << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);

  fs::create_directories(plan.out);
  write_file_atomic(plan.out / "runs.csv", runs);
  write_file_atomic(plan.out / "summary.csv", csv);
  write_file_atomic(plan.out / "summary.txt", txt.str());
  return txt.str();
}

// ---------------------------------------------------------------------------
// Command line

/// Entry point of the colab_lab tool; returns the process exit code.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"colab_lab: context label learning experiments on synthetic data"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  const std::vector<std::string> arms{"none", "kmeans", "dilated", "oracle", "colab"};
  std::string config_file, arm = "colab", split, dataset, out, checkpoint, spec_file, plan_file;
  std::optional<std::size_t> t;
  std::optional<std::uint64_t> seed;
  bool postprocess = false, exclude_empty = false, resume = false, run_missing = false;
  std::size_t stop_after = 0, samples = 10000, bins = 64;
  double roi_share = 0.5;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  gen->add_option("--spec", spec_file, "Task spec JSON (defaults when omitted)");
  gen->add_option("--seed", seed, "Override the spec seed");
  gen->add_option("--out", out, "Output dataset directory")->required();

  auto* train = app.add_subcommand("train", "Train one arm for one seed");
  train->add_option("--config", config_file, "Config JSON (defaults when omitted)");
  train->add_option("--arm", arm, "Context source")->check(CLI::IsMember(arms));
  train->add_option("--t", t, "Number of context classes");
  train->add_option("--seed", seed, "Run seed (default: first config seed)");
  train->add_option("--dataset", dataset, "Dataset directory")->required();
  train->add_option("--out", out, "Run directory")->required();
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint when present");
  train->add_option("--stop-after", stop_after, "Stop after this epoch, as if interrupted");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint or run directory")->required();
  eval->add_option("--dataset", dataset, "Dataset directory")->required();
  eval->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_flag("--postprocess", postprocess, "Keep only the largest predicted component");
  eval->add_flag("--exclude-empty", exclude_empty, "Drop cases that hit an empty-mask convention");
  eval->add_option("--out", out, "Output directory")->required();

  auto* cmp = app.add_subcommand("compare", "Summarize (and optionally run) an experiment plan");
  cmp->add_option("plan", plan_file, "Plan JSON")->required();
  cmp->add_flag("--run", run_missing, "Train runs that are missing or incomplete");
  cmp->add_option("--out", out, "Override the plan output directory");

  auto* logits = app.add_subcommand("export-logits", "Sample pixel logits of a checkpoint");
  logits->add_option("--checkpoint", checkpoint, "Checkpoint or run directory")->required();
  logits->add_option("--dataset", dataset, "Dataset directory")->required();
  logits->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  logits->add_option("--samples", samples, "Number of sampled pixels");
  logits->add_option("--roi-share", roi_share, "Fraction of ROI samples")->check(CLI::Range(0.0, 1.0));
  logits->add_option("--seed", seed, "Sampling seed");
  logits->add_option("--out", out, "Output directory")->required();

  auto* hist = app.add_subcommand("hist", "Intensity histograms per label class");
  hist->add_option("--dataset", dataset, "Dataset directory")->required();
  hist->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  hist->add_option("--arm", arm, "Context source")->check(CLI::IsMember(arms));
  hist->add_option("--t", t, "Number of context classes");
  hist->add_option("--seed", seed, "Seed for k-means labels");
  hist->add_option("--config", config_file, "Config JSON (soft mask and k-means settings)");
  hist->add_option("--checkpoint", checkpoint, "Run or checkpoint directory (colab arm)");
  hist->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber);
  hist->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }
  if (quiet) log_threshold() = LogLevel::kWarn;

  try {
    auto config = [&] { return config_file.empty() ? ColabConfig{} : load_config(config_file); };
    if (gen->parsed()) {
      TaskSpec spec = spec_file.empty() ? TaskSpec{} : load_task_spec(spec_file);
      if (seed) spec.seed = *seed;
      cmd_gen_data(spec, out);
    } else if (train->parsed()) {
      const ColabConfig cfg = config();
      TrainRequest req{dataset, out, cfg, parse_context_kind(arm), t.value_or(cfg.t), seed.value_or(cfg.seeds.at(0)),
                       resume, stop_after};
      cmd_train(req);
    } else if (eval->parsed()) {
      cmd_eval(EvalRequest{checkpoint, dataset, out, split.empty() ? "test" : split, postprocess, exclude_empty});
    } else if (logits->parsed()) {
      cmd_export_logits(
          LogitsRequest{checkpoint, dataset, out, split.empty() ? "test" : split, samples, seed.value_or(0), roi_share});
    } else if (hist->parsed()) {
      const ColabConfig cfg = config();
      cmd_hist(HistRequest{dataset, out, checkpoint, cfg, split.empty() ? "train" : split, parse_context_kind(arm),
                           t.value_or(cfg.t), seed.value_or(cfg.seeds.at(0)), bins});
    } else if (cmp->parsed()) {
      ExperimentPlan plan = load_plan(plan_file);
      if (!out.empty()) plan.out = out;
      const CompareResult res = cmd_compare(plan, run_missing);
      const std::string table = write_compare_outputs(plan, res);
      if (!quiet) std::cout << table;
      if (res.diverged) return kExitDiverged;
      if (!res.complete()) {
        log_warn("plan is incomplete: missing runs are marked MISSING");
        return kExitIncomplete;
      }
    }
  } catch (const NumericError& e) {
    log(LogLevel::kError, e.what());
    return kExitDiverged;
  } catch (const Error& e) {
    log(LogLevel::kError, e.what());
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    log(LogLevel::kError, e.what());
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    log(LogLevel::kError, std::string("malformed JSON: ") + e.what());
    return kExitInvalid;
  }
  return kExitOk;
}

}  // namespace colab::cli
