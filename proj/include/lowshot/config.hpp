#pragma once

// Experiment configuration: one JSON document with dataset, extractor,
// phase1, phase2, eval, and output sections. Unknown keys are errors so a
// typo cannot silently fall back to a default and skew a comparison.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lowshot/dataset.hpp"
#include "lowshot/pipeline.hpp"

namespace lowshot {

enum class ExtractorKind : std::uint8_t { identity, mlp };

struct DatasetSource {
  bool use_csv = false;
  SyntheticSpec synthetic;  // when !use_csv
  std::string train_csv;    // when use_csv
  std::string test_csv;
};

struct EvalSettings {
  std::vector<double> precision_targets{0.95, 0.99};
  bool knn = false;
  std::size_t knn_k = 5;
  std::string checkpoint;  // empty: <output_dir>/checkpoint.txt

  void validate() const {
    if (precision_targets.empty())
      throw std::invalid_argument("eval config: needs at least one precision target");
    for (double t : precision_targets)
      if (!(t > 0.0 && t <= 1.0))
        throw std::invalid_argument("eval config: precision targets must be in (0, 1]");
    if (knn_k == 0) throw std::invalid_argument("eval config: knn_k must be >= 1");
  }
};

struct ExperimentConfig {
  DatasetSource dataset;
  ExtractorKind extractor = ExtractorKind::mlp;
  std::size_t hidden_width = 0;  // 0: 2 * input dim
  bool has_phase1 = false;
  bool has_phase2 = false;
  TrainConfig phase1;
  TrainConfig phase2;
  EvalSettings eval;
  std::uint64_t model_seed = 1;
  std::string output_dir = "out";
};

namespace detail {

// Wraps one JSON object; every key must be read before finish().
class ConfigSection {
 public:
  ConfigSection(const nlohmann::ordered_json& j, std::string where)
      : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw parse_error(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const nlohmann::ordered_json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw parse_error(where_ + "." + key + ": expected a number");
    return v.get<double>();
  }

  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned())
      throw parse_error(where_ + "." + key + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(unsigned_int(key, fallback));
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) throw parse_error(where_ + "." + key + ": expected a boolean");
    return v.get<bool>();
  }

  std::string text(const std::string& key, std::string fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_string()) throw parse_error(where_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<double> number_array(const std::string& key, std::vector<double> fallback) {
    if (!has(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_array()) throw parse_error(where_ + "." + key + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw parse_error(where_ + "." + key + ": expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw parse_error(where_ + ": unknown key '" + key + "'");
  }

  const std::string& where() const { return where_; }

 private:
  const nlohmann::ordered_json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline SyntheticSpec parse_synthetic(const nlohmann::ordered_json& j, const std::string& where) {
  ConfigSection s(j, where);
  SyntheticSpec spec;
  spec.d = s.count("d", spec.d);
  spec.k_base = s.count("k_base", spec.k_base);
  spec.k_lowshot = s.count("k_lowshot", spec.k_lowshot);
  spec.train_per_base = s.count("train_per_base", spec.train_per_base);
  spec.train_per_lowshot = s.count("train_per_lowshot", spec.train_per_lowshot);
  spec.test_per_class = s.count("test_per_class", spec.test_per_class);
  spec.mean_scale = s.number("mean_scale", spec.mean_scale);
  spec.sigma = s.number("sigma", spec.sigma);
  spec.seed = s.unsigned_int("seed", spec.seed);
  s.finish();
  if (spec.k_base + spec.k_lowshot < 2)
    throw parse_error(where + ": fewer than 2 classes");
  spec.validate();
  return spec;
}

inline void parse_phase(const nlohmann::ordered_json& j, const std::string& where,
                        TrainConfig& cfg) {
  ConfigSection s(j, where);
  cfg.epochs = s.count("epochs", cfg.epochs);
  cfg.lr = s.number("lr", cfg.lr);
  cfg.lr_decay = s.number("lr_decay", cfg.lr_decay);
  cfg.batch_size = s.count("batch_size", cfg.batch_size);
  cfg.seed = s.unsigned_int("seed", cfg.seed);
  cfg.loss.lambda_ccs = s.number("lambda_ccs", cfg.loss.lambda_ccs);
  cfg.loss.center_weight = s.number("center_weight", cfg.loss.center_weight);
  if (cfg.phase == Phase::phase2) {
    cfg.oversample_factor = s.count("oversample_factor", cfg.oversample_factor);
    cfg.update_features = s.boolean("update_features", cfg.update_features);
    if (s.has("norm_prior")) {
      const auto& v = s.at("norm_prior");
      if (!v.is_string()) throw parse_error(where + ".norm_prior: expected a string");
      cfg.loss.prior = norm_prior_from_name(v.get<std::string>());
    }
    cfg.loss.prior_weight = s.number("prior_weight", cfg.loss.prior_weight);
  }
  s.finish();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw parse_error(where + ": " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text,
                                                const std::string& where) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(where + ": " + e.what());
  }
  detail::ConfigSection root(j, where);
  ExperimentConfig cfg;

  if (root.has("dataset")) {
    detail::ConfigSection ds(root.at("dataset"), where + ".dataset");
    const bool has_synth = ds.has("synthetic");
    const bool has_csv = ds.has("csv");
    if (has_synth == has_csv)
      throw parse_error(where + ".dataset: exactly one of 'synthetic' or 'csv' required");
    if (has_synth) {
      cfg.dataset.synthetic = detail::parse_synthetic(ds.at("synthetic"), where + ".dataset.synthetic");
    } else {
      cfg.dataset.use_csv = true;
      detail::ConfigSection csv(ds.at("csv"), where + ".dataset.csv");
      if (!csv.has("train")) throw parse_error(where + ".dataset.csv: missing 'train'");
      cfg.dataset.train_csv = csv.text("train", "");
      cfg.dataset.test_csv = csv.text("test", "");
      csv.finish();
    }
    ds.finish();
  }

  if (root.has("extractor")) {
    detail::ConfigSection ex(root.at("extractor"), where + ".extractor");
    const std::string kind = ex.text("type", "mlp");
    if (kind == "identity")
      cfg.extractor = ExtractorKind::identity;
    else if (kind == "mlp")
      cfg.extractor = ExtractorKind::mlp;
    else
      throw parse_error(where + ".extractor.type: expected 'identity' or 'mlp'");
    cfg.hidden_width = ex.count("hidden_width", 0);
    ex.finish();
  }

  cfg.model_seed = root.unsigned_int("model_seed", cfg.model_seed);
  cfg.phase1.phase = Phase::phase1;
  cfg.phase1.epochs = 30;
  cfg.phase1.seed = cfg.model_seed + 1;
  cfg.phase2.phase = Phase::phase2;
  cfg.phase2.epochs = 20;
  cfg.phase2.seed = cfg.model_seed + 2;
  if (root.has("phase1")) {
    cfg.has_phase1 = true;
    detail::parse_phase(root.at("phase1"), where + ".phase1", cfg.phase1);
  }
  if (root.has("phase2")) {
    cfg.has_phase2 = true;
    detail::parse_phase(root.at("phase2"), where + ".phase2", cfg.phase2);
  }

  if (root.has("eval")) {
    detail::ConfigSection ev(root.at("eval"), where + ".eval");
    cfg.eval.precision_targets = ev.number_array("precision_targets", cfg.eval.precision_targets);
    cfg.eval.knn = ev.boolean("knn", cfg.eval.knn);
    cfg.eval.knn_k = ev.count("knn_k", cfg.eval.knn_k);
    cfg.eval.checkpoint = ev.text("checkpoint", cfg.eval.checkpoint);
    ev.finish();
    try {
      cfg.eval.validate();
    } catch (const std::invalid_argument& e) {
      throw parse_error(where + ".eval: " + e.what());
    }
  }

  cfg.output_dir = root.text("output_dir", cfg.output_dir);
  root.finish();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path), path.string());
}

// --seed: one value rewires every random stream in the experiment.
inline void apply_seed_override(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.dataset.synthetic.seed = seed;
  cfg.model_seed = seed;
  cfg.phase1.seed = seed + 1;
  cfg.phase2.seed = seed + 2;
}

// Generates or loads the (train, test) pair named by the config.
inline std::pair<LabeledSet, LabeledSet> load_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset.use_csv) return generate_synthetic(cfg.dataset.synthetic);
  if (cfg.dataset.test_csv.empty())
    throw std::invalid_argument("dataset: csv test path not configured");
  return {load_labeled_csv(cfg.dataset.train_csv), load_labeled_csv(cfg.dataset.test_csv)};
}

inline PipelineConfig pipeline_from(const ExperimentConfig& cfg) {
  PipelineConfig p;
  p.hidden_width = cfg.hidden_width;
  p.model_seed = cfg.model_seed;
  p.phase1 = cfg.phase1;
  p.phase2 = cfg.phase2;
  // The alignment variants of the comparison need a nonzero weight even
  // when the config trains its own phase 1 without alignment.
  p.lambda_ccs = cfg.phase1.loss.lambda_ccs > 0.0 ? cfg.phase1.loss.lambda_ccs : 0.1;
  return p;
}

}  // namespace lowshot
