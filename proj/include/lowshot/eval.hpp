#pragma once

// Scoring: precision-coverage analysis, per-split top-1, a cosine KNN
// baseline, weight-norm diagnostics, and the pairwise decision ratio
// exp((w_j - w_k)' phi).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lowshot/dataset.hpp"
#include "lowshot/linalg.hpp"
#include "lowshot/model.hpp"

namespace lowshot {

struct PredictionRecord {
  double confidence = 0.0;  // max softmax probability (or calibrated KNN score)
  int predicted = -1;
  int actual = -1;
  Split split = Split::base;

  bool correct() const { return predicted == actual; }
};

inline std::vector<PredictionRecord> predict_all(const ModelParams& params,
                                                 const LabeledSet& test) {
  params.extractor.validate(test.dim());
  if (params.extractor.output_dim(test.dim()) != params.head.feature_dim())
    throw shape_error("predict_all: extractor output dim != head feature dim");
  if (params.head.num_classes() < test.num_classes())
    throw shape_error("predict_all: head has fewer classes than the dataset");

  std::vector<PredictionRecord> records;
  records.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Vector phi = extract(params.extractor, test.features.row(i));
    const Vector z = logits(params.head, phi);
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k)
      if (z[k] > z[best]) best = k;  // ties keep the lowest index
    const Vector p = stable_softmax(z);
    PredictionRecord r;
    r.confidence = p[best];
    r.predicted = static_cast<int>(best);
    r.actual = test.labels[i];
    r.split = test.split_of_class[static_cast<std::size_t>(r.actual)];
    records.push_back(r);
  }
  return records;
}

namespace detail {

// Confidence descending; at equal confidence incorrect predictions come
// first so every reported coverage is a lower bound; otherwise input order.
inline std::vector<std::size_t> coverage_order(const std::vector<PredictionRecord>& records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].confidence != records[b].confidence)
      return records[a].confidence > records[b].confidence;
    return !records[a].correct() && records[b].correct();
  });
  return order;
}

}  // namespace detail

// Largest fraction of records that can be answered while keeping precision
// at or above the target; 0 if no prefix of the sorted order qualifies.
inline double coverage_at_precision(const std::vector<PredictionRecord>& records,
                                    double target) {
  if (records.empty())
    throw std::invalid_argument("coverage_at_precision: no records");
  if (!(target > 0.0 && target <= 1.0))
    throw std::invalid_argument("coverage_at_precision: target must be in (0, 1]");
  const auto order = detail::coverage_order(records);
  const double n = static_cast<double>(records.size());
  std::size_t correct = 0;
  double best = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (records[order[i]].correct()) ++correct;
    const double precision = static_cast<double>(correct) / static_cast<double>(i + 1);
    if (precision >= target) best = static_cast<double>(i + 1) / n;
  }
  return best;
}

// (coverage, precision) for every prefix of the sorted order.
inline std::vector<std::pair<double, double>> precision_coverage_curve(
    const std::vector<PredictionRecord>& records) {
  if (records.empty())
    throw std::invalid_argument("precision_coverage_curve: no records");
  const auto order = detail::coverage_order(records);
  const double n = static_cast<double>(records.size());
  std::vector<std::pair<double, double>> curve;
  curve.reserve(records.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (records[order[i]].correct()) ++correct;
    curve.emplace_back(static_cast<double>(i + 1) / n,
                       static_cast<double>(correct) / static_cast<double>(i + 1));
  }
  return curve;
}

inline double top1(const std::vector<PredictionRecord>& records, Split split) {
  std::size_t total = 0, correct = 0;
  for (const PredictionRecord& r : records) {
    if (r.split != split) continue;
    ++total;
    if (r.correct()) ++correct;
  }
  if (total == 0)
    throw std::invalid_argument(std::string("top1: no records in split ") + split_name(split));
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b,
                                double eps = 1e-12) {
  const double na = std::max(l2_norm(a), eps);
  const double nb = std::max(l2_norm(b), eps);
  return dot(a, b) / (na * nb);
}

// Cosine KNN over raw feature rows. Neighbors rank by similarity (gallery
// index breaks exact ties); the predicted class is the majority among the
// top k, vote ties going to the class with the most similar neighbor, then
// to the lower class index. Confidence maps the winning class's mean
// neighbor similarity into (0, 1] via (s + 1) / 2.
inline std::vector<PredictionRecord> knn_predict(const LabeledSet& gallery,
                                                 const LabeledSet& test, std::size_t k) {
  if (k == 0) throw std::invalid_argument("knn_predict: k must be >= 1");
  if (gallery.size() == 0) throw std::invalid_argument("knn_predict: empty gallery");
  if (k > gallery.size())
    throw std::invalid_argument("knn_predict: k exceeds gallery size");
  if (gallery.dim() != test.dim())
    throw shape_error("knn_predict: gallery/test feature dims differ");

  std::vector<PredictionRecord> records;
  records.reserve(test.size());
  std::vector<std::size_t> order(gallery.size());
  std::vector<double> sims(gallery.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (std::size_t g = 0; g < gallery.size(); ++g)
      sims[g] = cosine_similarity(test.features.row(i), gallery.features.row(g));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (sims[a] != sims[b]) return sims[a] > sims[b];
      return a < b;
    });

    const std::size_t K = gallery.num_classes();
    std::vector<std::size_t> votes(K, 0);
    std::vector<double> best_sim(K, -2.0);
    std::vector<double> sim_sum(K, 0.0);
    for (std::size_t t = 0; t < k; ++t) {
      const auto cls = static_cast<std::size_t>(gallery.labels[order[t]]);
      ++votes[cls];
      sim_sum[cls] += sims[order[t]];
      best_sim[cls] = std::max(best_sim[cls], sims[order[t]]);
    }
    std::size_t win = 0;
    bool have = false;
    for (std::size_t c = 0; c < K; ++c) {
      if (votes[c] == 0) continue;
      if (!have || votes[c] > votes[win] ||
          (votes[c] == votes[win] && best_sim[c] > best_sim[win])) {
        win = c;
        have = true;
      }
    }

    PredictionRecord r;
    const double mean_sim = sim_sum[win] / static_cast<double>(votes[win]);
    r.confidence = (mean_sim + 1.0) / 2.0;
    r.predicted = static_cast<int>(win);
    r.actual = test.labels[i];
    r.split = test.split_of_class[static_cast<std::size_t>(r.actual)];
    records.push_back(r);
  }
  return records;
}

struct WeightNormReport {
  Vector per_class;              // |w_k| per class
  double mean_base_sqnorm = 0.0;    // 0 when the split is empty
  double mean_lowshot_sqnorm = 0.0;
};

inline WeightNormReport weight_norm_report(const HeadWeights& head, const ClassSplits& splits) {
  WeightNormReport rep;
  rep.per_class.resize(head.num_classes());
  for (std::size_t k = 0; k < head.num_classes(); ++k)
    rep.per_class[k] = l2_norm(head.W.row(k));
  auto mean_sq = [&](const std::vector<int>& rows) {
    if (rows.empty()) return 0.0;
    double sum = 0.0;
    for (int k : rows) sum += squared_norm(head.W.row(static_cast<std::size_t>(k)));
    return sum / static_cast<double>(rows.size());
  };
  rep.mean_base_sqnorm = mean_sq(splits.base);
  rep.mean_lowshot_sqnorm = mean_sq(splits.lowshot);
  return rep;
}

// (w_j - w_k)' phi: log of the posterior ratio p_j / p_k, which is the
// quantity that places phi on one side of the j/k decision hyperplane.
inline double log_decision_ratio(std::span<const double> w_j, std::span<const double> w_k,
                                 std::span<const double> phi) {
  return dot(w_j, phi) - dot(w_k, phi);
}

inline double decision_ratio(std::span<const double> w_j, std::span<const double> w_k,
                             std::span<const double> phi) {
  return std::exp(log_decision_ratio(w_j, w_k, phi));
}

struct EvalReport {
  std::vector<std::pair<double, double>> curve;  // (coverage, precision)
  std::vector<std::pair<double, double>> coverage_at;  // (target, coverage)
  double top1_base = 0.0;     // 0 when the test set has no records in the split
  double top1_lowshot = 0.0;
  Vector weight_norms;

  void validate() const {
    if (curve.empty()) throw std::invalid_argument("eval report: empty curve");
    double prev = 0.0;
    for (const auto& [cov, prec] : curve) {
      if (!(cov > prev)) throw std::invalid_argument("eval report: curve coverage not strictly increasing");
      if (!(prec >= 0.0 && prec <= 1.0))
        throw std::invalid_argument("eval report: curve precision outside [0, 1]");
      prev = cov;
    }
    for (const auto& [target, cov] : coverage_at) {
      if (!(target > 0.0 && target <= 1.0))
        throw std::invalid_argument("eval report: precision target outside (0, 1]");
      if (!(cov >= 0.0 && cov <= 1.0))
        throw std::invalid_argument("eval report: coverage outside [0, 1]");
    }
    if (!(top1_base >= 0.0 && top1_base <= 1.0) || !(top1_lowshot >= 0.0 && top1_lowshot <= 1.0))
      throw std::invalid_argument("eval report: top-1 outside [0, 1]");
    for (double norm : weight_norms)
      if (!(norm >= 0.0) || !std::isfinite(norm))
        throw std::invalid_argument("eval report: bad weight norm");
  }
};

inline EvalReport make_report(const std::vector<PredictionRecord>& records,
                              const std::vector<double>& targets, const HeadWeights& head) {
  EvalReport rep;
  rep.curve = precision_coverage_curve(records);
  for (double t : targets) rep.coverage_at.emplace_back(t, coverage_at_precision(records, t));
  auto split_top1 = [&](Split s) {
    for (const PredictionRecord& r : records)
      if (r.split == s) return top1(records, s);
    return 0.0;
  };
  rep.top1_base = split_top1(Split::base);
  rep.top1_lowshot = split_top1(Split::low_shot);
  rep.weight_norms.resize(head.num_classes());
  for (std::size_t k = 0; k < head.num_classes(); ++k)
    rep.weight_norms[k] = l2_norm(head.W.row(k));
  rep.validate();
  return rep;
}

inline std::string curve_to_csv(const std::vector<std::pair<double, double>>& curve) {
  std::ostringstream out;
  out << "coverage,precision\n";
  for (const auto& [cov, prec] : curve)
    out << format_double(cov) << "," << format_double(prec) << "\n";
  return out.str();
}

}  // namespace lowshot
