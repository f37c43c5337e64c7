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

#pragma once

// Training loops: the learned-context (CoLab) bilevel trainer and the static
// baselines share one loop; they differ only in where the context labels of a
// batch come from.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "colab/autodiff.hpp"
#include "colab/bilevel.hpp"
#include "colab/config.hpp"
#include "colab/contextgen.hpp"
#include "colab/error.hpp"
#include "colab/geometry.hpp"
#include "colab/io.hpp"
#include "colab/labeling.hpp"
#include "colab/log.hpp"
#include "colab/losses.hpp"
#include "colab/metrics.hpp"
#include "colab/nets.hpp"
#include "colab/params.hpp"
#include "colab/synthdata.hpp"

namespace colab {

class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

// ---------------------------------------------------------------------------
// Targets

/// Soft dilated mask per image, computed from the full ground truth. Images
/// without ROI get M = 0, i.e. the far-field label everywhere.
inline Grid<double> image_soft_mask(const Mask& roi, double m, double tau) {
  auto d = distance_map(roi);
  return d ? soft_dilated_mask(*d, m, tau).values : empty_soft_mask(roi.height, roi.width, m, tau).values;
}

/// Extended distance-constrained target from generator logits [N,t,H,W]:
/// softmax -> aggregation with y -> blend with the far-field label under M.
inline Var make_targets(const Tensor& y, const Var& generator_logits, const Tensor& mask) {
  const std::size_t t = generator_logits.shape().at(1);
  Var q = context_probability(generator_logits);
  return distance_constrained_label(aggregate_binary(y, q), background_hard_label(t), mask);
}

/// Same, with M computed from the ROI masks of the batch itself.
inline Var make_targets(const std::vector<Mask>& roi, const Var& generator_logits, double m, double tau) {
  const std::size_t N = roi.size(), H = roi.at(0).height, W = roi.at(0).width;
  Tensor mask(Shape{N, 1, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    const Grid<double> M = image_soft_mask(roi[n], m, tau);
    std::copy(M.data.begin(), M.data.end(), mask.data().begin() + static_cast<std::ptrdiff_t>(n * H * W));
  }
  return make_targets(one_hot_binary(roi), generator_logits, mask);
}

/// ROI ground truth as a [N,1,H,W] tensor.
inline Tensor roi_target(const std::vector<Mask>& roi) {
  const std::size_t N = roi.size(), H = roi.at(0).height, W = roi.at(0).width;
  Tensor y(Shape{N, 1, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < H * W; ++p) y[n * H * W + p] = roi[n].data[p] ? 1.0 : 0.0;
  return y;
}

// ---------------------------------------------------------------------------
// The bilevel problem on one batch

/// L_seg(theta, omega): segmenter vs. generator-derived targets on a fixed batch;
/// L_roi(theta): one-vs-all BCE on the ROI channel.
class NetworkBilevel {
 public:
  NetworkBilevel(NetConfig segmenter, NetConfig generator, Tensor images, Tensor y, Tensor mask,
                 std::vector<std::size_t> roi_channels = {})
      : seg_(std::move(segmenter)),
        gen_(std::move(generator)),
        images_(Var::constant(std::move(images))),
        y_(std::move(y)),
        mask_(std::move(mask)),
        roi_channels_(std::move(roi_channels)) {
    const std::size_t N = y_.dim(0), hw = y_.dim(2) * y_.dim(3);
    y_roi_ = Tensor(Shape{N, 1, y_.dim(2), y_.dim(3)});
    for (std::size_t n = 0; n < N; ++n)
      std::copy_n(y_.data().begin() + static_cast<std::ptrdiff_t>(n * 2 * hw), hw,
                  y_roi_.data().begin() + static_cast<std::ptrdiff_t>(n * hw));
  }

  SegGrads seg_grads(const NetworkParams& theta, const NetworkParams& omega) const {
    ParamVars tv = bind_params(theta), ov = bind_params(omega);
    Var logits = forward(seg_, tv, images_);
    Var target = make_targets(y_, forward(gen_, ov, images_), mask_);
    LossValue loss = seg_loss(logits, target);
    Gradients g = backward(loss.total);
    return {loss.total.value().item(), collect(g, tv), collect(g, ov)};
  }

  RoiGrads roi_grads(const NetworkParams& theta) const {
    ParamVars tv = bind_params(theta);
    LossValue loss = roi_loss(forward(seg_, tv, images_), y_roi_, roi_channels_);
    Gradients g = backward(loss.total);
    return {loss.total.value().item(), collect(g, tv)};
  }

 private:
  NetConfig seg_;
  NetConfig gen_;
  Var images_;
  Tensor y_;
  Tensor mask_;
  Tensor y_roi_;
  std::vector<std::size_t> roi_channels_;
};

// ---------------------------------------------------------------------------
// Training state

struct EpochRecord {
  std::size_t epoch = 0;
  double dsc = 0.0, sen = 0.0, prc = 0.0, hd95 = 0.0;
  double loss_ce = 0.0, loss_dice = 0.0, loss_roi = 0.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EpochRecord, epoch, dsc, sen, prc, hd95, loss_ce, loss_dice, loss_roi)

struct TrainState {
  ContextKind arm = ContextKind::kNone;
  std::size_t t = 1;
  std::uint64_t seed = 0;
  SegNetwork segmenter;
  GradientMap segmenter_momentum;
  std::optional<SegNetwork> generator;  // learned-context arm only
  GradientMap generator_momentum;
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  std::uint64_t batch_rng_state = 0;
  double initial_loss = 0.0;  // 0 until the first iteration
  std::size_t generator_updates = 0;
  std::size_t skipped_updates = 0;
  std::vector<EpochRecord> history;
};

struct IterationLog {
  double loss_ce = 0.0, loss_dice = 0.0, loss_roi = 0.0;
  bool generator_updated = false;
};

struct TrainHooks {
  std::function<void(const Batch&, const TrainState&)> on_batch;
  std::function<void(const TrainState&, const IterationLog&)> on_iteration;
};

struct TrainOptions {
  std::filesystem::path out_dir;    // empty: no files written
  std::size_t stop_after_epoch = 0;  // >0: stop (as if interrupted) after this epoch
  TrainHooks hooks;
};

inline const std::vector<std::string>& metrics_csv_header() {
  static const std::vector<std::string> h{"arm", "seed", "epoch", "dsc", "sen", "prc", "hd95", "loss_ce", "loss_dice",
                                          "loss_roi"};
  return h;
}

inline std::string metrics_csv_row(const TrainState& s, const EpochRecord& r) {
  std::ostringstream os;
  os << to_string(s.arm) << ',' << s.seed << ',' << r.epoch << ',' << fmt_float(r.dsc) << ',' << fmt_float(r.sen) << ','
     << fmt_float(r.prc) << ',' << fmt_float(r.hd95) << ',' << fmt_float(r.loss_ce) << ',' << fmt_float(r.loss_dice)
     << ',' << fmt_float(r.loss_roi);
  return os.str();
}

// ---------------------------------------------------------------------------
// Evaluation

/// Per-case metrics of the ROI prediction on full images.
inline std::vector<MetricsRecord> evaluate(const SegNetwork& net, const std::vector<Case>& cases,
                                           bool postprocess = false) {
  std::vector<MetricsRecord> out;
  for (const Case& c : cases) {
    Tensor logits = predict_logits(net, c.image.reshaped(Shape{1, 1, c.image.dim(1), c.image.dim(2)}));
    Mask pred = predict_roi(logits);
    if (postprocess) pred = largest_component(pred);
    out.push_back(evaluate_case(c.id, pred, c.roi));
  }
  return out;
}

struct MeanMetrics {
  double dsc = 0.0, sen = 0.0, prc = 0.0, hd95 = 0.0;
};

inline MeanMetrics mean_metrics(const std::vector<MetricsRecord>& rs) {
  MeanMetrics m;
  if (rs.empty()) return m;
  for (const auto& r : rs) {
    m.dsc += r.dsc;
    m.sen += r.sen;
    m.prc += r.prc;
    m.hd95 += r.hd95;
  }
  const double n = static_cast<double>(rs.size());
  return {m.dsc / n, m.sen / n, m.prc / n, m.hd95 / n};
}

// ---------------------------------------------------------------------------
// Checkpoints: directory of .ten files plus manifest.json

inline void save_checkpoint(const std::filesystem::path& dir, const TrainState& s, const ColabConfig& cfg) {
  const auto tmp = dir.string() + ".partial";
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp);
  save_params(std::filesystem::path(tmp) / "theta", s.segmenter.params);
  save_params(std::filesystem::path(tmp) / "theta_momentum", s.segmenter_momentum);
  nlohmann::ordered_json j;
  j["arm"] = to_string(s.arm);
  j["t"] = s.t;
  j["seed"] = s.seed;
  j["iteration"] = s.iteration;
  j["epoch"] = s.epoch;
  j["batch_rng_state"] = s.batch_rng_state;
  j["initial_loss"] = s.initial_loss;
  j["generator_updates"] = s.generator_updates;
  j["skipped_updates"] = s.skipped_updates;
  j["segmenter"] = nlohmann::json(s.segmenter.config);
  if (s.generator) {
    j["generator"] = nlohmann::json(s.generator->config);
    save_params(std::filesystem::path(tmp) / "omega", s.generator->params);
    save_params(std::filesystem::path(tmp) / "omega_momentum", s.generator_momentum);
  }
  j["config"] = nlohmann::json(cfg);
  j["history"] = nlohmann::json(s.history);
  write_file_atomic(std::filesystem::path(tmp) / "manifest.json", j.dump(2) + "\n");
  std::filesystem::remove_all(dir);
  std::filesystem::rename(tmp, dir);
}

struct Checkpoint {
  TrainState state;
  ColabConfig config;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint manifest in " + dir.string() + ": " + e.what());
  }
  Checkpoint c;
  TrainState& s = c.state;
  s.arm = parse_context_kind(j.at("arm").get<std::string>());
  s.t = j.at("t").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.iteration = j.at("iteration").get<std::size_t>();
  s.epoch = j.at("epoch").get<std::size_t>();
  s.batch_rng_state = j.at("batch_rng_state").get<std::uint64_t>();
  s.initial_loss = j.at("initial_loss").get<double>();
  s.generator_updates = j.at("generator_updates").get<std::size_t>();
  s.skipped_updates = j.at("skipped_updates").get<std::size_t>();
  s.segmenter.config = j.at("segmenter").get<NetConfig>();
  s.segmenter.params = load_params(dir / "theta");
  s.segmenter_momentum = load_params(dir / "theta_momentum");
  if (j.contains("generator")) {
    SegNetwork g{j.at("generator").get<NetConfig>(), load_params(dir / "omega")};
    s.generator = std::move(g);
    s.generator_momentum = load_params(dir / "omega_momentum");
  }
  s.history = j.at("history").get<std::vector<EpochRecord>>();
  c.config = j.at("config").get<ColabConfig>();
  return c;
}

// ---------------------------------------------------------------------------
// Trainer

class Trainer {
 public:
  /// `source` decides the arm: kNone trains a plain 2-channel segmenter,
  /// kColab learns the context labels, any other kind uses its static fields.
  Trainer(ColabConfig cfg, const Dataset& data, ContextSource source)
      : cfg_(std::move(cfg)), data_(data), source_(std::move(source)) {
    cfg_.validate();
    if (source_.kind == ContextKind::kColab) source_.t = cfg_.t;
    if (source_.kind != ContextKind::kNone && source_.kind != ContextKind::kColab && !frozen_generator_ &&
        source_.q.size() != data_.train.size()) {
      throw ConfigError("Trainer: static context source must provide one field per training case");
    }
    if (source_.kind == ContextKind::kColab || source_.distance_constrained) {
      for (const Case& c : data_.train) soft_masks_.push_back(image_soft_mask(c.roi, cfg_.m, cfg_.tau));
    }
  }

  /// Context labels produced per patch by a fixed generator (no updates).
  void use_frozen_generator(SegNetwork generator) {
    if (source_.kind == ContextKind::kNone || source_.kind == ContextKind::kColab) {
      throw ConfigError("use_frozen_generator: needs a static arm");
    }
    source_.t = generator.config.out_channels;
    soft_masks_.clear();
    for (const Case& c : data_.train) soft_masks_.push_back(image_soft_mask(c.roi, cfg_.m, cfg_.tau));
    source_.distance_constrained = true;
    frozen_generator_ = std::move(generator);
  }

  const ColabConfig& config() const { return cfg_; }
  const ContextSource& source() const { return source_; }

  NetConfig segmenter_config(std::uint64_t seed) const {
    return NetConfig{1, cfg_.base_width, cfg_.depth, 2, seed};
  }
  NetConfig generator_config(std::uint64_t seed) const {
    return NetConfig{1, cfg_.base_width, cfg_.depth, cfg_.t, mix64(seed ^ hash_name("generator"))};
  }

  TrainState init_state(std::uint64_t seed) const {
    TrainState s;
    s.arm = source_.kind;
    s.seed = seed;
    s.segmenter = build_net(segmenter_config(seed));
    if (source_.kind != ContextKind::kNone) {
      s.t = source_.t;
      if (s.t < 2) throw ConfigError("Trainer: context source must have t >= 2");
      s.segmenter = extend_head(s.segmenter, s.t);
    }
    if (source_.kind == ContextKind::kColab) s.generator = build_net(generator_config(seed));
    s.batch_rng_state = Rng::keyed(seed, "batches").state();
    return s;
  }

  /// Targets for the segmenter update on `batch`, given the current state.
  Tensor static_targets(const Batch& batch, const TrainState& s) const {
    const Tensor y = one_hot_binary(batch.roi);
    switch (source_.kind) {
      case ContextKind::kNone: return y;
      case ContextKind::kColab: {
        Var o = forward(s.generator->config, bind_params(s.generator->params, false), Var::constant(batch.images));
        return make_targets(y, o, batch_soft_mask(batch)).value();
      }
      default: break;
    }
    Var q;
    if (frozen_generator_) {
      q = context_probability(Var::constant(predict_logits(*frozen_generator_, batch.images)));
    } else {
      std::vector<Tensor> crops;
      const std::size_t P = batch.images.dim(2);
      for (std::size_t n = 0; n < batch.size(); ++n)
        crops.push_back(crop_chw(source_.q[batch.case_index[n]], batch.y0[n], batch.x0[n], P, P));
      q = Var::constant(stack(crops));
    }
    Var target = aggregate_binary(y, q);
    if (source_.distance_constrained) {
      target = distance_constrained_label(target, background_hard_label(source_.t), batch_soft_mask(batch));
    }
    return target.value();
  }

  /// One iteration: optional generator update(s) on this batch, then the segmenter step.
  IterationLog step(TrainState& s, const TrainHooks& hooks = {}) const {
    Rng rng(s.batch_rng_state);
    const Batch batch =
        sample_batch(data_.train, cfg_.batch_size, cfg_.roi_patch_fraction, cfg_.patch_size, cfg_.m, rng);
    s.batch_rng_state = rng.state();
    if (hooks.on_batch) hooks.on_batch(batch, s);

    IterationLog log;
    const bool update_due = source_.kind == ContextKind::kColab && cfg_.update_period != kNever &&
                            s.iteration % cfg_.update_period == 0 && cfg_.beta > 0.0;
    if (update_due) log.generator_updated = update_generator(s, batch);

    const Tensor target = static_targets(batch, s);
    ParamVars tv = bind_params(s.segmenter.params);
    Var logits = forward(s.segmenter, tv, Var::constant(batch.images));
    LossValue loss = seg_loss(logits, Var::constant(target));
    const double total = loss.total.value().item();
    if (!std::isfinite(total)) throw NumericError("training loss is not finite at iteration " + std::to_string(s.iteration));
    if (s.initial_loss == 0.0) s.initial_loss = total;
    if (total > cfg_.divergence_factor * s.initial_loss) {
      throw DivergenceError("training diverged at iteration " + std::to_string(s.iteration) + ": loss " +
                            fmt_float(total) + " > " + fmt_float(cfg_.divergence_factor) + " x initial " +
                            fmt_float(s.initial_loss));
    }
    log.loss_ce = loss.breakdown["ce"];
    log.loss_dice = loss.breakdown["dice"];
    {
      Var detached = Var::constant(logits.value());
      log.loss_roi = roi_loss(detached, roi_target(batch.roi), cfg_.roi_loss_channels).total.value().item();
    }
    const GradientMap grads = collect(backward(loss.total), tv);
    sgd_step(s.segmenter.params, grads, cfg_.alpha_at(s.iteration), cfg_.momentum, s.segmenter_momentum);
    ++s.iteration;
    if (hooks.on_iteration) hooks.on_iteration(s, log);
    return log;
  }

  /// Run until cfg.epochs (or opts.stop_after_epoch), evaluating, logging and
  /// checkpointing at every epoch boundary.
  void run(TrainState& s, const TrainOptions& opts = {}) const {
    std::ofstream csv;
    if (!opts.out_dir.empty()) {
      std::filesystem::create_directories(opts.out_dir);
      // Rewritten from the state history so a resumed run never duplicates rows.
      const auto path = opts.out_dir / "metrics.csv";
      csv.open(path, std::ios::trunc);
      if (!csv) throw IoError("cannot write " + path.string());
      const auto& h = metrics_csv_header();
      for (std::size_t i = 0; i < h.size(); ++i) csv << (i ? "," : "") << h[i];
      csv << '\n';
      for (const EpochRecord& r : s.history) csv << metrics_csv_row(s, r) << '\n';
    }
    const std::size_t last = opts.stop_after_epoch ? std::min(opts.stop_after_epoch, cfg_.epochs) : cfg_.epochs;
    while (s.epoch < last) {
      EpochRecord rec;
      rec.epoch = s.epoch + 1;
      for (std::size_t k = 0; k < cfg_.iters_per_epoch; ++k) {
        const IterationLog it = step(s, opts.hooks);
        rec.loss_ce += it.loss_ce;
        rec.loss_dice += it.loss_dice;
        rec.loss_roi += it.loss_roi;
      }
      const double n = static_cast<double>(cfg_.iters_per_epoch);
      rec.loss_ce /= n;
      rec.loss_dice /= n;
      rec.loss_roi /= n;
      const MeanMetrics m = mean_metrics(evaluate(s.segmenter, data_.test));
      rec.dsc = m.dsc;
      rec.sen = m.sen;
      rec.prc = m.prc;
      rec.hd95 = m.hd95;
      s.history.push_back(rec);
      s.epoch = rec.epoch;
      if (csv.is_open()) {
        csv << metrics_csv_row(s, rec) << '\n';
        csv.flush();
        save_checkpoint(opts.out_dir / "checkpoint", s, cfg_);
      }
      log_info(to_string(s.arm) + " seed " + std::to_string(s.seed) + " epoch " + std::to_string(rec.epoch) +
               ": dsc " + fmt_float(rec.dsc) + " prc " + fmt_float(rec.prc) + " sen " + fmt_float(rec.sen));
    }
  }

 private:
  Tensor batch_soft_mask(const Batch& batch) const {
    const std::size_t N = batch.size(), P = batch.images.dim(2);
    Tensor mask(Shape{N, 1, P, P});
    for (std::size_t n = 0; n < N; ++n) {
      const Grid<double> M = crop(soft_masks_.at(batch.case_index[n]), batch.y0[n], batch.x0[n], P, P);
      std::copy(M.data.begin(), M.data.end(), mask.data().begin() + static_cast<std::ptrdiff_t>(n * P * P));
    }
    return mask;
  }

  bool update_generator(TrainState& s, const Batch& batch) const {
    NetworkBilevel problem(s.segmenter.config, s.generator->config, batch.images, one_hot_binary(batch.roi),
                           batch_soft_mask(batch), cfg_.roi_loss_channels);
    const double alpha = cfg_.alpha_at(s.iteration);
    try {
      for (std::size_t k = 0; k < cfg_.inner_steps; ++k) {
        const InnerStepResult inner = inner_step(problem, s.segmenter.params, s.generator->params, alpha);
        const Hypergradient h = hypergradient(problem, s.segmenter.params, inner.theta_star, s.generator->params,
                                              alpha, cfg_.eps_scale);
        sgd_step(s.generator->params, h.omega, cfg_.beta, cfg_.beta_momentum, s.generator_momentum);
      }
    } catch (const NumericError& e) {
      log_warn(std::string("skipping generator update at iteration ") + std::to_string(s.iteration) + ": " + e.what());
      ++s.skipped_updates;
      return false;
    }
    ++s.generator_updates;
    monitor_collapse(s, batch);
    return true;
  }

  // Warn when the generated context collapses onto a single class within the band.
  void monitor_collapse(const TrainState& s, const Batch& batch) const {
    const Tensor q =
        softmax_channels(predict_logits(*s.generator, batch.images));
    const Tensor mask = batch_soft_mask(batch);
    const std::size_t N = q.dim(0), t = q.dim(1), hw = q.dim(2) * q.dim(3);
    std::vector<double> mass(t, 0.0);
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < hw; ++p) {
        if (batch.roi[n].data[p]) continue;
        const double w = mask[n * hw + p];
        for (std::size_t j = 0; j < t; ++j) mass[j] += w * q[(n * t + j) * hw + p];
        total += w;
      }
    if (total <= 0.0) return;
    for (std::size_t j = 0; j < t; ++j)
      if (mass[j] / total > 0.99) {
        log(LogLevel::kDebug, "generator context collapsed onto class " + std::to_string(j) + " at iteration " +
                                  std::to_string(s.iteration));
      }
  }

  ColabConfig cfg_;
  const Dataset& data_;
  ContextSource source_;
  std::vector<Grid<double>> soft_masks_;
  std::optional<SegNetwork> frozen_generator_;
};

// ---------------------------------------------------------------------------
// Convenience entry points

inline TrainState train_colab(const ColabConfig& cfg, const Dataset& data, std::uint64_t seed,
                              const TrainOptions& opts = {}) {
  Trainer trainer(cfg, data, ContextSource{ContextKind::kColab, cfg.t, {}, true});
  TrainState s = trainer.init_state(seed);
  trainer.run(s, opts);
  return s;
}

inline TrainState train_baseline(const ColabConfig& cfg, const Dataset& data, ContextSource source,
                                 std::uint64_t seed, const TrainOptions& opts = {}) {
  if (source.kind == ContextKind::kColab) throw ConfigError("train_baseline: use train_colab for the learned arm");
  Trainer trainer(cfg, data, std::move(source));
  TrainState s = trainer.init_state(seed);
  trainer.run(s, opts);
  return s;
}

/// Static context source of the given kind for the training cases.
inline ContextSource build_context_source(ContextKind kind, std::size_t t, const ColabConfig& cfg, const Dataset& data,
                                          std::uint64_t seed) {
  ContextSource src;
  src.kind = kind;
  src.t = kind == ContextKind::kNone ? 1 : t;
  switch (kind) {
    case ContextKind::kNone:
    case ContextKind::kColab: break;
    case ContextKind::kDilated:
      src.t = 2;
      for (const Case& c : data.train) src.q.push_back(dilated_mask_context(c.roi, cfg.m, cfg.tau));
      break;
    case ContextKind::kOracle:
      src.t = 2;
      for (const Case& c : data.train) src.q.push_back(oracle_context(c.organ, c.roi, 2));
      break;
    case ContextKind::kKmeans: {
      std::vector<Grid<double>> images;
      std::vector<Mask> region, roi;
      for (const Case& c : data.train) {
        Grid<double> g(c.image.dim(1), c.image.dim(2));
        std::copy(c.image.data().begin(), c.image.data().end(), g.data.begin());
        images.push_back(std::move(g));
        region.emplace_back(c.roi.height, c.roi.width, 1);
        roi.push_back(c.roi);
      }
      KMeansContext km = kmeans_context(images, region, roi, t, seed, cfg.kmeans_restarts);
      src.t = km.t;
      for (const auto& lab : km.labels) src.q.push_back(one_hot(lab, km.t));
      break;
    }
  }
  return src;
}

}  // namespace colab
