#pragma once

// Plain-SGD training loop. Phase 1 learns the representation (extractor and
// a throwaway head) on base classes; phase 2 trains a classifier over all
// classes on the base set plus oversampled low-shot samples, optionally with
// a weight-norm prior and with the extractor frozen or updated.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "lowshot/dataset.hpp"
#include "lowshot/losses.hpp"
#include "lowshot/model.hpp"

namespace lowshot {

enum class Phase : std::uint8_t { phase1, phase2 };

struct TrainConfig {
  Phase phase = Phase::phase1;
  double lr = 0.005;
  double lr_decay = 0.95;          // multiplied in once per epoch
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;          // drives every epoch shuffle
  std::size_t oversample_factor = 100;  // phase 2: low-shot repetition count
  bool update_features = true;     // phase 2: false freezes the extractor
  LossConfig loss;

  void validate() const {
    loss.validate();
    if (!(lr > 0.0) || !std::isfinite(lr))
      throw std::invalid_argument("train config: lr must be finite and > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0))
      throw std::invalid_argument("train config: lr_decay must be in (0, 1]");
    if (batch_size == 0)
      throw std::invalid_argument("train config: batch_size must be >= 1");
    if (oversample_factor == 0)
      throw std::invalid_argument("train config: oversample_factor must be >= 1");
    if (phase == Phase::phase1 && loss.prior != NormPrior::none)
      throw std::invalid_argument("train config: norm priors apply to phase 2 only");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean per-sample total loss over the epoch
  double alpha = 0.0;     // prior target in the epoch's last step
  double mean_lowshot_sqnorm = 0.0;
  double mean_base_sqnorm = 0.0;
  double seconds = 0.0;   // wall time; kept in memory, not exported
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
};

// 0 for an empty row set, unlike alpha_from_base which rejects it.
inline double mean_squared_row_norm(const Matrix& W, const std::vector<int>& rows) {
  if (rows.empty()) return 0.0;
  double sum = 0.0;
  for (int k : rows) sum += squared_norm(W.row(static_cast<std::size_t>(k)));
  return sum / static_cast<double>(rows.size());
}

struct StepOutcome {
  LossBreakdown value;
  double alpha = 0.0;  // target the prior chased in this step
};

namespace detail {

inline void check_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite ") + term + " loss");
}

inline void check_finite_grads(const LossResult& r) {
  for (double g : r.grad_head.data)
    if (!std::isfinite(g)) throw std::runtime_error("non-finite head gradient");
  for (const Layer& l : r.grad_extractor.layers) {
    for (double g : l.weight.data)
      if (!std::isfinite(g)) throw std::runtime_error("non-finite extractor gradient");
    for (double g : l.bias)
      if (!std::isfinite(g)) throw std::runtime_error("non-finite extractor gradient");
  }
}

}  // namespace detail

// One gradient step on one batch. Prior targets (alpha, beta) and the
// detached alignment weights are refreshed from the current parameters
// before the gradient is formed. `centers` may be null when the centre
// term is off. Accepts lr == 0 as a no-op update.
inline StepOutcome sgd_step(ModelParams& params, const Matrix& inputs,
                            const std::vector<int>& labels, const TrainConfig& cfg,
                            const ClassSplits& splits, Matrix* centers = nullptr) {
  if (inputs.rows == 0) throw std::invalid_argument("sgd_step: empty batch");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr))
    throw std::invalid_argument("sgd_step: lr must be finite and >= 0");

  LossState state = make_loss_state(params.head, splits,
                                    centers ? *centers : Matrix{});
  const bool want_extractor_grads = cfg.update_features && !params.extractor.is_identity();
  LossResult res =
      total_loss(inputs, labels, params, cfg.loss, splits, state, want_extractor_grads);

  detail::check_finite(res.value.ce, "cross-entropy");
  detail::check_finite(res.value.ccs, "alignment");
  detail::check_finite(res.value.prior, "norm-prior");
  detail::check_finite(res.value.center, "center");
  detail::check_finite(res.value.total, "total");
  detail::check_finite_grads(res);

  for (std::size_t i = 0; i < params.head.W.data.size(); ++i)
    params.head.W.data[i] -= cfg.lr * res.grad_head.data[i];
  if (want_extractor_grads) {
    for (std::size_t li = 0; li < params.extractor.layers.size(); ++li) {
      Layer& l = params.extractor.layers[li];
      const Layer& g = res.grad_extractor.layers[li];
      for (std::size_t i = 0; i < l.weight.data.size(); ++i)
        l.weight.data[i] -= cfg.lr * g.weight.data[i];
      for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= cfg.lr * g.bias[i];
    }
  }
  if (centers && cfg.loss.center_weight > 0.0)
    update_centers_ema(*centers, res.phis, labels);

  return {res.value, state.alpha};
}

// Runs cfg.epochs passes over the set (oversampled first in phase 2),
// shuffling every epoch from one seeded generator and decaying lr after
// each epoch. (data, config, seed) fully determine every parameter bit.
inline TrainTrace train(ModelParams& params, const LabeledSet& train_set,
                        const TrainConfig& cfg) {
  cfg.validate();
  const ClassSplits splits = class_splits(train_set);
  if (cfg.phase == Phase::phase2 && splits.lowshot.empty())
    throw std::invalid_argument("train: phase 2 needs a low-shot partition");
  if (cfg.loss.prior == NormPrior::up && splits.base.empty())
    throw std::invalid_argument("train: up prior needs base classes for its target");
  if (params.head.num_classes() != train_set.num_classes())
    throw shape_error("train: head classes != dataset classes");
  params.extractor.validate(train_set.dim());
  const std::size_t d_out = params.extractor.output_dim(train_set.dim());
  if (d_out != params.head.feature_dim())
    throw shape_error("train: extractor output dim != head feature dim");

  LabeledSet oversampled;
  const LabeledSet* data = &train_set;
  if (cfg.phase == Phase::phase2 && cfg.oversample_factor > 1) {
    oversampled = oversample(train_set, cfg.oversample_factor);
    data = &oversampled;
  }
  const std::size_t n = data->size();

  Matrix centers;
  const bool use_centers = cfg.loss.center_weight > 0.0;
  if (use_centers) centers = Matrix(train_set.num_classes(), d_out);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainTrace trace;
  TrainConfig step_cfg = cfg;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    step_cfg.lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));

    double loss_sum = 0.0;
    double last_alpha = splits.base.empty() ? 0.0
                        : mean_squared_row_norm(params.head.W, splits.base);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      Matrix batch(count, data->dim());
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        batch.set_row(i, data->features.row(order[start + i]));
        labels[i] = data->labels[order[start + i]];
      }
      try {
        const StepOutcome out = sgd_step(params, batch, labels, step_cfg, splits,
                                         use_centers ? &centers : nullptr);
        loss_sum += out.value.total;
        last_alpha = out.alpha;
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.alpha = last_alpha;
    rec.mean_lowshot_sqnorm = mean_squared_row_norm(params.head.W, splits.lowshot);
    rec.mean_base_sqnorm = mean_squared_row_norm(params.head.W, splits.base);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    trace.epochs.push_back(rec);
  }
  return trace;
}

// The seconds column is written as 0 so a rerun with the same config
// produces byte-identical files; measured times stay in EpochRecord.
inline std::string trace_to_csv(const TrainTrace& trace) {
  std::ostringstream out;
  out << "epoch,loss,alpha,mean_lowshot_sqnorm,mean_base_sqnorm,seconds\n";
  for (const EpochRecord& r : trace.epochs) {
    out << r.epoch << "," << format_double(r.loss) << "," << format_double(r.alpha) << ","
        << format_double(r.mean_lowshot_sqnorm) << "," << format_double(r.mean_base_sqnorm)
        << ",0\n";
  }
  return out.str();
}

}  // namespace lowshot
