#pragma once

// Training objective: softmax cross-entropy plus an optional feature
// alignment term (cosine of each feature against its class weight, the
// weight treated as a constant) and an optional weight-norm prior.
//
// total = ce + lambda_ccs * ccs + prior_weight * prior + center_weight * center
//
// Breakdown fields hold the raw, unweighted term values.

#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lowshot/dataset.hpp"
#include "lowshot/linalg.hpp"
#include "lowshot/model.hpp"

namespace lowshot {

enum class NormPrior : std::uint8_t { none, up, shrink, equal_norm };

inline const char* norm_prior_name(NormPrior p) {
  switch (p) {
    case NormPrior::none: return "none";
    case NormPrior::up: return "up";
    case NormPrior::shrink: return "shrink";
    default: return "equal_norm";
  }
}

inline NormPrior norm_prior_from_name(std::string_view name) {
  if (name == "none") return NormPrior::none;
  if (name == "up") return NormPrior::up;
  if (name == "shrink") return NormPrior::shrink;
  if (name == "equal_norm") return NormPrior::equal_norm;
  throw parse_error("unknown norm prior '" + std::string(name) + "'");
}

struct LossConfig {
  double lambda_ccs = 0.0;
  NormPrior prior = NormPrior::none;
  double prior_weight = 1.0;
  double center_weight = 0.0;
  double epsilon_norm = 1e-12;

  void validate() const {
    if (!(lambda_ccs >= 0.0) || !std::isfinite(lambda_ccs))
      throw std::invalid_argument("loss config: lambda_ccs must be finite and >= 0");
    if (!(prior_weight >= 0.0) || !std::isfinite(prior_weight))
      throw std::invalid_argument("loss config: prior_weight must be finite and >= 0");
    if (!(center_weight >= 0.0) || !std::isfinite(center_weight))
      throw std::invalid_argument("loss config: center_weight must be finite and >= 0");
    if (!(epsilon_norm > 0.0) || !std::isfinite(epsilon_norm))
      throw std::invalid_argument("loss config: epsilon_norm must be finite and > 0");
  }
};

// Values frozen at the start of a step. The alignment term reads class
// weights from `w_detached` so its gradient never flows into the head,
// and the prior targets `alpha` / `beta` are constants within the step.
struct LossState {
  Matrix w_detached;  // K x d snapshot of the head
  double alpha = 0.0; // mean squared base-class weight norm
  double beta = 0.0;  // mean squared weight norm over all classes
  Matrix centers;     // K x d feature centers, empty when unused
};

inline double alpha_from_base(const Matrix& W, const std::vector<int>& base) {
  if (base.empty())
    throw std::invalid_argument("alpha_from_base: no base classes");
  double sum = 0.0;
  for (int k : base) sum += squared_norm(W.row(static_cast<std::size_t>(k)));
  return sum / static_cast<double>(base.size());
}

inline double beta_from_all(const Matrix& W) {
  if (W.rows == 0) throw std::invalid_argument("beta_from_all: no classes");
  double sum = 0.0;
  for (std::size_t k = 0; k < W.rows; ++k) sum += squared_norm(W.row(k));
  return sum / static_cast<double>(W.rows);
}

inline LossState make_loss_state(const HeadWeights& head, const ClassSplits& splits,
                                 Matrix centers = {}) {
  LossState s;
  s.w_detached = head.W;
  s.alpha = splits.base.empty() ? 0.0 : alpha_from_base(head.W, splits.base);
  s.beta = beta_from_all(head.W);
  s.centers = std::move(centers);
  return s;
}

// -log p[target]. The canonical training path computes cross-entropy from
// logits (below), which never evaluates log near zero; this overload is
// for callers that already hold probabilities.
inline double cross_entropy(std::span<const double> probs, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= probs.size())
    throw std::out_of_range("cross_entropy: target out of range");
  return -std::log(std::max(probs[static_cast<std::size_t>(target)], DBL_MIN));
}

// log(sum_j exp z_j) - z[target], evaluated via the max-shifted form.
inline double cross_entropy_from_logits(std::span<const double> z, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= z.size())
    throw std::out_of_range("cross_entropy_from_logits: target out of range");
  return log_sum_exp(z) - z[static_cast<std::size_t>(target)];
}

// -cos(w, phi) with both norms clamped below at eps.
inline double neg_cosine(std::span<const double> w, std::span<const double> phi, double eps) {
  const double nw = std::max(l2_norm(w), eps);
  const double np = std::max(l2_norm(phi), eps);
  return -dot(w, phi) / (nw * np);
}

// Sum of -cos(w'_{y_i}, phi_i) over the batch.
inline double ccs_loss(const Matrix& phis, const std::vector<int>& labels,
                       const Matrix& w_detached, double eps) {
  if (phis.rows != labels.size())
    throw shape_error("ccs_loss: feature/label count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < phis.rows; ++i)
    sum += neg_cosine(w_detached.row(static_cast<std::size_t>(labels[i])), phis.row(i), eps);
  return sum;
}

// d(-cos)/d phi. With nw = max(|w|, eps), np = max(|phi|, eps):
//   -w / (nw np) + cos * phi / np^2, second term absent while |phi| <= eps
// (there np is the constant eps).
inline Vector ccs_grad_phi(std::span<const double> w, std::span<const double> phi, double eps) {
  const double nw = std::max(l2_norm(w), eps);
  const double raw_np = l2_norm(phi);
  const double np = std::max(raw_np, eps);
  const double cos = dot(w, phi) / (nw * np);
  Vector g(phi.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] = -w[j] / (nw * np);
    if (raw_np > eps) g[j] += cos * phi[j] / (np * np);
  }
  return g;
}

// Sum over the batch of |c_{y_i} - phi_i|^2 against fixed centers.
inline double center_loss(const Matrix& phis, const std::vector<int>& labels,
                          const Matrix& centers) {
  if (phis.rows != labels.size())
    throw shape_error("center_loss: feature/label count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < phis.rows; ++i) {
    const auto c = centers.row(static_cast<std::size_t>(labels[i]));
    const auto p = phis.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double diff = c[j] - p[j];
      sum += diff * diff;
    }
  }
  return sum;
}

// (mean_{k in lowshot} |w_k|^2 - alpha)^2.
inline double up_penalty(const Matrix& W, const std::vector<int>& lowshot, double alpha) {
  if (lowshot.empty())
    throw std::invalid_argument("up_penalty: no low-shot classes");
  double mean = 0.0;
  for (int k : lowshot) mean += squared_norm(W.row(static_cast<std::size_t>(k)));
  mean /= static_cast<double>(lowshot.size());
  const double diff = mean - alpha;
  return diff * diff;
}

// sum_k |w_k|^2.
inline double shrink_penalty(const Matrix& W) {
  return squared_norm(W.data);
}

// sum_k (|w_k|^2 - beta)^2.
inline double equal_norm_penalty(const Matrix& W, double beta) {
  double sum = 0.0;
  for (std::size_t k = 0; k < W.rows; ++k) {
    const double diff = squared_norm(W.row(k)) - beta;
    sum += diff * diff;
  }
  return sum;
}

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double ccs = 0.0;
  double prior = 0.0;
  double center = 0.0;
};

struct LossResult {
  LossBreakdown value;
  Matrix grad_head;             // K x d, total-loss gradient
  Matrix grad_phis;             // n x d, gradient w.r.t. extracted features
  ExtractorParams grad_extractor;  // same shapes as the extractor, zero if skipped
  Matrix phis;                  // n x d extracted features
};

// Forward and backward pass over one batch. Gradients cover everything the
// optimiser touches: the head always, the extractor only when
// `extractor_grads` is set (features treated as constants otherwise).
inline LossResult total_loss(const Matrix& inputs, const std::vector<int>& labels,
                             const ModelParams& params, const LossConfig& config,
                             const ClassSplits& splits, const LossState& state,
                             bool extractor_grads) {
  config.validate();
  const std::size_t n = inputs.rows;
  if (labels.size() != n) throw shape_error("total_loss: input/label count mismatch");
  const std::size_t K = params.head.num_classes();
  const std::size_t d = params.head.feature_dim();
  if (state.w_detached.rows != K || state.w_detached.cols != d)
    throw shape_error("total_loss: stale loss state shape");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw std::out_of_range("total_loss: label out of range");

  const bool use_center = config.center_weight > 0.0;
  if (use_center && (state.centers.rows != K || state.centers.cols != d))
    throw shape_error("total_loss: center matrix shape mismatch");

  LossResult r;
  r.grad_head = Matrix(K, d);
  r.grad_phis = Matrix(n, d);
  r.phis = Matrix(n, d);
  r.grad_extractor = zeros_like(params.extractor);

  std::vector<ForwardTrace> traces;
  if (extractor_grads && !params.extractor.is_identity()) traces.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    Vector phi;
    if (extractor_grads && !params.extractor.is_identity()) {
      traces.push_back(extract_traced(params.extractor, inputs.row(i)));
      phi = traces.back().output;
    } else {
      phi = extract(params.extractor, inputs.row(i));
    }
    if (phi.size() != d) throw shape_error("total_loss: extractor output dim != head dim");
    r.phis.set_row(i, phi);

    const Vector z = logits(params.head, phi);
    r.value.ce += cross_entropy_from_logits(z, labels[i]);
    Vector residual = stable_softmax(z);  // p - t
    residual[y] -= 1.0;

    for (std::size_t k = 0; k < K; ++k) {
      if (residual[k] == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) r.grad_head(k, j) += residual[k] * phi[j];
    }
    Vector gphi(d, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (residual[k] == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) gphi[j] += residual[k] * params.head.W(k, j);
    }

    if (config.lambda_ccs > 0.0) {
      const auto w_prime = state.w_detached.row(y);
      r.value.ccs += neg_cosine(w_prime, phi, config.epsilon_norm);
      const Vector g = ccs_grad_phi(w_prime, phi, config.epsilon_norm);
      for (std::size_t j = 0; j < d; ++j) gphi[j] += config.lambda_ccs * g[j];
    }

    if (use_center) {
      const auto c = state.centers.row(y);
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = c[j] - phi[j];
        r.value.center += diff * diff;
        gphi[j] += config.center_weight * 2.0 * (phi[j] - c[j]);
      }
    }

    r.grad_phis.set_row(i, gphi);
    if (extractor_grads && !params.extractor.is_identity())
      extract_backward(params.extractor, traces[i], std::move(gphi), r.grad_extractor);
  }

  if (config.prior != NormPrior::none) {
    Matrix grad_prior(K, d);
    switch (config.prior) {
      case NormPrior::up: {
        r.value.prior = up_penalty(params.head.W, splits.lowshot, state.alpha);
        double mean = 0.0;
        for (int k : splits.lowshot)
          mean += squared_norm(params.head.W.row(static_cast<std::size_t>(k)));
        mean /= static_cast<double>(splits.lowshot.size());
        const double coef = 4.0 * (mean - state.alpha) / static_cast<double>(splits.lowshot.size());
        for (int k : splits.lowshot) {
          const auto ks = static_cast<std::size_t>(k);
          for (std::size_t j = 0; j < d; ++j) grad_prior(ks, j) = coef * params.head.W(ks, j);
        }
        // The promotion term must leave base-class weights untouched.
        for (int k : splits.base)
          for (std::size_t j = 0; j < d; ++j)
            if (grad_prior(static_cast<std::size_t>(k), j) != 0.0)
              throw std::logic_error("up prior leaked gradient into a base-class row");
        break;
      }
      case NormPrior::shrink: {
        r.value.prior = shrink_penalty(params.head.W);
        for (std::size_t idx = 0; idx < grad_prior.data.size(); ++idx)
          grad_prior.data[idx] = 2.0 * params.head.W.data[idx];
        break;
      }
      default: {  // equal_norm
        r.value.prior = equal_norm_penalty(params.head.W, state.beta);
        for (std::size_t k = 0; k < K; ++k) {
          const double coef = 4.0 * (squared_norm(params.head.W.row(k)) - state.beta);
          for (std::size_t j = 0; j < d; ++j) grad_prior(k, j) = coef * params.head.W(k, j);
        }
        break;
      }
    }
    for (std::size_t idx = 0; idx < grad_prior.data.size(); ++idx)
      r.grad_head.data[idx] += config.prior_weight * grad_prior.data[idx];
  }

  r.value.total = r.value.ce + config.lambda_ccs * r.value.ccs +
                  config.prior_weight * r.value.prior +
                  config.center_weight * r.value.center;
  return r;
}

// Exponential moving average pull of each seen class centre toward the
// batch mean of its features. Unseen classes keep their centre.
inline void update_centers_ema(Matrix& centers, const Matrix& phis,
                               const std::vector<int>& labels, double decay = 0.95) {
  if (phis.rows != labels.size())
    throw shape_error("update_centers_ema: feature/label count mismatch");
  if (!(decay >= 0.0 && decay <= 1.0))
    throw std::invalid_argument("update_centers_ema: decay must be in [0, 1]");
  std::vector<std::size_t> counts(centers.rows, 0);
  Matrix sums(centers.rows, centers.cols);
  for (std::size_t i = 0; i < phis.rows; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= centers.rows) throw std::out_of_range("update_centers_ema: label out of range");
    ++counts[y];
    for (std::size_t j = 0; j < centers.cols; ++j) sums(y, j) += phis(i, j);
  }
  for (std::size_t k = 0; k < centers.rows; ++k) {
    if (counts[k] == 0) continue;
    for (std::size_t j = 0; j < centers.cols; ++j) {
      const double mean = sums(k, j) / static_cast<double>(counts[k]);
      centers(k, j) = decay * centers(k, j) + (1.0 - decay) * mean;
    }
  }
}

}  // namespace lowshot
