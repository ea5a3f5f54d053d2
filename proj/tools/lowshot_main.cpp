// Experiment driver. Subcommands: gen-data, train, eval, compare. Every
// run is a pure function of its config file (plus --seed/--out overrides):
// artifacts are written atomically and verified by reading them back, and
// the process exits 0 only if all of that succeeded.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lowshot/config.hpp"
#include "lowshot/dataset.hpp"
#include "lowshot/eval.hpp"
#include "lowshot/model.hpp"
#include "lowshot/pipeline.hpp"
#include "lowshot/report_io.hpp"
#include "lowshot/trainer.hpp"

namespace fs = std::filesystem;
using namespace lowshot;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void add_common_flags(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config_path, "experiment config JSON file");
  sub->add_option("--out", flags.out_dir, "output directory (overrides the config)");
  sub->add_option("--seed", flags.seed, "override every seed in the config");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig cfg = flags.config_path.empty()
                             ? parse_experiment_config("{}", "<defaults>")
                             : load_experiment_config(flags.config_path);
  if (flags.seed) apply_seed_override(cfg, *flags.seed);
  if (!flags.out_dir.empty()) cfg.output_dir = flags.out_dir;
  return cfg;
}

// Writes, then proves the bytes landed; exit 0 must mean the artifact is
// really on disk and loadable.
void write_artifact(const fs::path& path, const std::string& content) {
  write_file_atomic(path, content);
  if (read_file(path) != content)
    throw std::runtime_error(path.string() + ": reread after write mismatched");
  std::cout << "wrote " << path.string() << "\n";
}

ExtractorParams initial_extractor(const ExperimentConfig& cfg, std::size_t input_dim) {
  if (cfg.extractor == ExtractorKind::identity) return {};
  return make_default_extractor(input_dim, cfg.hidden_width, cfg.model_seed);
}

int cmd_gen_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.use_csv)
    throw std::invalid_argument("gen-data needs a synthetic dataset section");
  const auto [train, test] = generate_synthetic(cfg.dataset.synthetic);

  const fs::path out(cfg.output_dir);
  save_labeled_csv(train, out / "train.csv");
  save_labeled_csv(test, out / "test.csv");
  if (load_labeled_csv(out / "train.csv") != train || load_labeled_csv(out / "test.csv") != test)
    throw std::runtime_error("generated CSVs did not round-trip");
  std::cout << "wrote " << (out / "train.csv").string() << " (" << train.size() << " rows)\n";
  std::cout << "wrote " << (out / "test.csv").string() << " (" << test.size() << " rows)\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  if (!cfg.has_phase1 && !cfg.has_phase2)
    throw std::invalid_argument("train: config needs a phase1 or phase2 section");
  const auto [train_set, test_set] = load_dataset(cfg);
  if (train_set.num_classes() < 2)
    throw std::invalid_argument("train: fewer than 2 classes");
  const fs::path out(cfg.output_dir);

  ModelParams params;
  params.extractor = initial_extractor(cfg, train_set.dim());
  const std::size_t d_out = params.extractor.output_dim(train_set.dim());

  if (cfg.has_phase1) {
    const LabeledSet base = base_subset(train_set);
    if (base.num_classes() == 0)
      throw std::invalid_argument("train: phase 1 needs base classes");
    Rng head_rng(cfg.model_seed + 1);
    params.head = make_head(base.num_classes(), d_out, head_rng);
    const TrainTrace trace = train(params, base, cfg.phase1);
    write_artifact(out / "trace_phase1.csv", trace_to_csv(trace));
    double secs = 0.0;
    for (const EpochRecord& r : trace.epochs) secs += r.seconds;
    std::cout << "phase 1: " << trace.epochs.size() << " epochs";
    if (!trace.epochs.empty())
      std::cout << ", final loss " << format_double(trace.epochs.back().loss);
    std::cout << " (" << secs << " s)\n";
  }
  if (cfg.has_phase2) {
    Rng head_rng(cfg.model_seed + 2);
    ModelParams classifier;
    classifier.extractor = params.extractor;
    classifier.head = make_head(train_set.num_classes(), d_out, head_rng);
    const TrainTrace trace = train(classifier, train_set, cfg.phase2);
    params = std::move(classifier);
    write_artifact(out / "trace_phase2.csv", trace_to_csv(trace));
    double secs = 0.0;
    for (const EpochRecord& r : trace.epochs) secs += r.seconds;
    std::cout << "phase 2: " << trace.epochs.size() << " epochs";
    if (!trace.epochs.empty())
      std::cout << ", final loss " << format_double(trace.epochs.back().loss);
    std::cout << " (" << secs << " s)\n";
  }

  const Checkpoint ckpt{params, cfg.model_seed};
  save_checkpoint(ckpt, out / "checkpoint.txt");
  if (!(load_checkpoint(out / "checkpoint.txt") == ckpt))
    throw std::runtime_error("checkpoint did not round-trip");
  std::cout << "wrote " << (out / "checkpoint.txt").string() << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
  const fs::path out(cfg.output_dir);
  const fs::path ckpt_path = cfg.eval.checkpoint.empty()
                                 ? out / "checkpoint.txt"
                                 : fs::path(cfg.eval.checkpoint);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto [train_set, test_set] = load_dataset(cfg);

  const auto records = predict_all(ckpt.params, test_set);
  const EvalReport report = make_report(records, cfg.eval.precision_targets, ckpt.params.head);
  write_artifact(out / "report.json", report_to_json(report));
  write_artifact(out / "curve.csv", curve_to_csv(report.curve));
  report_from_json(read_file(out / "report.json"));

  for (const auto& [target, cov] : report.coverage_at)
    std::cout << "coverage@" << format_double(target) << " = " << format_double(cov) << "\n";
  std::cout << "top1_base = " << format_double(report.top1_base) << "\n";
  std::cout << "top1_lowshot = " << format_double(report.top1_lowshot) << "\n";

  if (cfg.eval.knn) {
    LabeledSet gallery = train_set;
    gallery.features = extract_batch(ckpt.params.extractor, train_set.features);
    LabeledSet queries = test_set;
    queries.features = extract_batch(ckpt.params.extractor, test_set.features);
    const auto knn_records = knn_predict(gallery, queries, cfg.eval.knn_k);
    const EvalReport knn_report =
        make_report(knn_records, cfg.eval.precision_targets, ckpt.params.head);
    write_artifact(out / "knn_report.json", report_to_json(knn_report));
    write_artifact(out / "knn_curve.csv", curve_to_csv(knn_report.curve));
    for (const auto& [target, cov] : knn_report.coverage_at)
      std::cout << "knn coverage@" << format_double(target) << " = " << format_double(cov) << "\n";
  }
  return 0;
}

int cmd_compare(const ExperimentConfig& cfg) {
  if (cfg.extractor != ExtractorKind::mlp)
    throw std::invalid_argument("compare: requires extractor type 'mlp'");
  const auto [train_set, test_set] = load_dataset(cfg);
  const auto methods = run_table3_suite(train_set, pipeline_from(cfg));
  const auto scores = score_methods(methods, test_set, cfg.eval.precision_targets);

  const fs::path out(cfg.output_dir);
  write_artifact(out / "compare.csv", compare_to_csv(scores));
  write_artifact(out / "compare.txt", compare_to_text(scores));
  std::cout << compare_to_text(scores);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"one-shot classifier experiments: data, training, evaluation"};
  app.require_subcommand(1);

  CommonFlags flags;
  CLI::App* gen = app.add_subcommand("gen-data", "generate synthetic train/test CSVs");
  CLI::App* tr = app.add_subcommand("train", "run the configured training phase(s)");
  CLI::App* ev = app.add_subcommand("eval", "score a checkpoint on the test set");
  CLI::App* cmp = app.add_subcommand("compare", "run the eight-method ablation table");
  for (CLI::App* sub : {gen, tr, ev, cmp}) add_common_flags(sub, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve_config(flags);
    if (app.got_subcommand(gen)) return cmd_gen_data(cfg);
    if (app.got_subcommand(tr)) return cmd_train(cfg);
    if (app.got_subcommand(ev)) return cmd_eval(cfg);
    return cmd_compare(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
