#pragma once

// Experiment assembly: the two training phases wired together, the
// eight-method ablation suite, and its summary table.

#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lowshot/eval.hpp"
#include "lowshot/trainer.hpp"

namespace lowshot {

// Reporting order of the ablations.
inline const std::vector<std::string>& compare_method_names() {
  static const std::vector<std::string> names = {
      "fixed_feature", "update_feature", "direct_train", "shrink_norm",
      "equal_norm",    "up_only",        "ccs_only",     "ccs_plus_up"};
  return names;
}

struct PipelineConfig {
  std::size_t hidden_width = 0;  // extractor hidden units; 0 means 2 * input dim
  double lambda_ccs = 0.1;       // alignment weight for the ccs variants' phase 1
  std::uint64_t model_seed = 1;  // parameter initialisation
  TrainConfig phase1;            // template; per-method fields overridden below
  TrainConfig phase2;
};

inline PipelineConfig default_pipeline(std::uint64_t seed) {
  PipelineConfig p;
  p.model_seed = seed;
  p.phase1.phase = Phase::phase1;
  p.phase1.epochs = 30;
  p.phase1.seed = seed + 1;
  p.phase2.phase = Phase::phase2;
  p.phase2.epochs = 20;
  p.phase2.seed = seed + 2;
  return p;
}

// d -> hidden (relu) -> d, so raw and extracted features share a dimension.
inline ExtractorParams make_default_extractor(std::size_t input_dim, std::size_t hidden_width,
                                              std::uint64_t model_seed) {
  Rng rng(model_seed);
  return make_mlp(input_dim, hidden_width ? hidden_width : 2 * input_dim, input_dim, rng);
}

// Phase 1: extractor plus a throwaway head trained on base classes only.
// The head seed is fixed so every caller sees the same initialisation.
inline ExtractorParams train_representation(const LabeledSet& train_set,
                                            const PipelineConfig& cfg, double lambda_ccs,
                                            TrainTrace* trace_out = nullptr) {
  const LabeledSet base = base_subset(train_set);
  if (base.num_classes() == 0)
    throw std::invalid_argument("train_representation: no base classes");
  ModelParams params;
  params.extractor = make_default_extractor(train_set.dim(), cfg.hidden_width, cfg.model_seed);
  Rng head_rng(cfg.model_seed + 1);
  params.head =
      make_head(base.num_classes(), params.extractor.output_dim(train_set.dim()), head_rng);
  TrainConfig tc = cfg.phase1;
  tc.phase = Phase::phase1;
  tc.loss.lambda_ccs = lambda_ccs;
  tc.loss.prior = NormPrior::none;
  tc.update_features = true;
  TrainTrace trace = train(params, base, tc);
  if (trace_out) *trace_out = std::move(trace);
  return params.extractor;
}

// Phase 2: fresh head over every class on the oversampled set, extractor
// shared from phase 1 and frozen unless update_features.
inline ModelParams train_classifier(const LabeledSet& train_set, const ExtractorParams& extractor,
                                    const PipelineConfig& cfg, NormPrior prior,
                                    bool update_features, TrainTrace* trace_out = nullptr) {
  ModelParams params;
  params.extractor = extractor;
  Rng head_rng(cfg.model_seed + 2);
  params.head =
      make_head(train_set.num_classes(), extractor.output_dim(train_set.dim()), head_rng);
  TrainConfig tc = cfg.phase2;
  tc.phase = Phase::phase2;
  tc.loss.prior = prior;
  tc.update_features = update_features;
  TrainTrace trace = train(params, train_set, tc);
  if (trace_out) *trace_out = std::move(trace);
  return params;
}

// No pretraining: extractor and head from random init, trained jointly on
// the raw imbalanced set (no low-shot repetition).
inline ModelParams train_direct(const LabeledSet& train_set, const PipelineConfig& cfg,
                                TrainTrace* trace_out = nullptr) {
  ModelParams params;
  params.extractor = make_default_extractor(train_set.dim(), cfg.hidden_width, cfg.model_seed);
  Rng head_rng(cfg.model_seed + 2);
  params.head =
      make_head(train_set.num_classes(), params.extractor.output_dim(train_set.dim()), head_rng);
  TrainConfig tc = cfg.phase2;
  tc.phase = Phase::phase2;
  tc.oversample_factor = 1;
  tc.loss.prior = NormPrior::none;
  tc.update_features = true;
  TrainTrace trace = train(params, train_set, tc);
  if (trace_out) *trace_out = std::move(trace);
  return params;
}

// All eight ablations on shared data, seeds, and initialisation. The two
// representation runs (plain and alignment-augmented) are trained once and
// reused by the methods that build on them.
inline std::map<std::string, ModelParams> run_table3_suite(const LabeledSet& train_set,
                                                           const PipelineConfig& cfg) {
  const ClassSplits splits = class_splits(train_set);
  if (splits.base.empty() || splits.lowshot.empty())
    throw std::invalid_argument("run_table3_suite: needs both base and low-shot classes");

  const ExtractorParams plain = train_representation(train_set, cfg, 0.0);
  const ExtractorParams aligned = train_representation(train_set, cfg, cfg.lambda_ccs);

  std::map<std::string, ModelParams> out;
  out["fixed_feature"] = train_classifier(train_set, plain, cfg, NormPrior::none, false);
  out["update_feature"] = train_classifier(train_set, plain, cfg, NormPrior::none, true);
  out["direct_train"] = train_direct(train_set, cfg);
  out["shrink_norm"] = train_classifier(train_set, plain, cfg, NormPrior::shrink, true);
  out["equal_norm"] = train_classifier(train_set, plain, cfg, NormPrior::equal_norm, true);
  out["up_only"] = train_classifier(train_set, plain, cfg, NormPrior::up, true);
  out["ccs_only"] = train_classifier(train_set, aligned, cfg, NormPrior::none, true);
  out["ccs_plus_up"] = train_classifier(train_set, aligned, cfg, NormPrior::up, true);
  return out;
}

struct MethodScore {
  std::string method;
  std::vector<std::pair<double, double>> lowshot_coverage_at;  // (target, coverage)
  double top1_base = 0.0;
  double top1_lowshot = 0.0;
};

// Evaluates every method on the same test set. Coverage targets are scored
// on the low-shot records only.
inline std::vector<MethodScore> score_methods(const std::map<std::string, ModelParams>& methods,
                                              const LabeledSet& test,
                                              const std::vector<double>& targets) {
  std::vector<MethodScore> scores;
  for (const std::string& name : compare_method_names()) {
    const auto it = methods.find(name);
    if (it == methods.end())
      throw std::invalid_argument("score_methods: missing method '" + name + "'");
    const auto records = predict_all(it->second, test);
    std::vector<PredictionRecord> lowshot;
    for (const PredictionRecord& r : records)
      if (r.split == Split::low_shot) lowshot.push_back(r);
    if (lowshot.empty())
      throw std::invalid_argument("score_methods: test set has no low-shot records");

    MethodScore s;
    s.method = name;
    for (double t : targets) s.lowshot_coverage_at.emplace_back(t, coverage_at_precision(lowshot, t));
    s.top1_base = top1(records, Split::base);
    s.top1_lowshot = top1(records, Split::low_shot);
    scores.push_back(std::move(s));
  }
  return scores;
}

inline std::string compare_to_csv(const std::vector<MethodScore>& scores) {
  std::ostringstream out;
  out << "method";
  if (!scores.empty())
    for (const auto& [target, cov] : scores.front().lowshot_coverage_at)
      out << ",lowshot_c_at_" << format_double(target);
  out << ",top1_base,top1_lowshot\n";
  for (const MethodScore& s : scores) {
    out << s.method;
    for (const auto& [target, cov] : s.lowshot_coverage_at) out << "," << format_double(cov);
    out << "," << format_double(s.top1_base) << "," << format_double(s.top1_lowshot) << "\n";
  }
  return out.str();
}

// Human-oriented fixed-width table; the CSV carries the exact values.
inline std::string compare_to_text(const std::vector<MethodScore>& scores) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "method";
  if (!scores.empty())
    for (const auto& [target, cov] : scores.front().lowshot_coverage_at) {
      std::ostringstream head;
      head << "lowshot C@" << target;
      out << std::setw(16) << head.str();
    }
  out << std::setw(12) << "top1_base" << std::setw(14) << "top1_lowshot" << "\n";
  out << std::fixed << std::setprecision(4);
  for (const MethodScore& s : scores) {
    out << std::setw(16) << s.method;
    for (const auto& [target, cov] : s.lowshot_coverage_at) out << std::setw(16) << cov;
    out << std::setw(12) << s.top1_base << std::setw(14) << s.top1_lowshot << "\n";
  }
  return out.str();
}

}  // namespace lowshot
