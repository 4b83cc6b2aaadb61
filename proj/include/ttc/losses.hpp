#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttc/toymodel.hpp"

namespace ttc::losses {

using model::Matrix;
using model::TokenId;
using model::Vec;

/// Lower clamp applied to probabilities inside every logarithm.
inline constexpr double kLogClamp = 1e-12;

struct LossWeights {
  double alpha = 0.5;  // agreement term
  double beta = 1.0;   // pseudo-label term

  /// Throws Config unless both weights are finite, nonnegative and not both 0.
  void validate() const;
};

struct HeadGradient {
  Matrix d_weight;  // V x H
  Vec d_bias;       // V

  static HeadGradient zeros_like(const model::LMHead& head);
  HeadGradient& operator+=(const HeadGradient& other);
  HeadGradient& operator*=(double s);
};

/// -sum_v p_v ln max(q_v, kLogClamp)
double cross_entropy(std::span<const double> p, std::span<const double> q);

/// CE(p, q) + CE(q, p)
double symmetric_ce(std::span<const double> p, std::span<const double> q);

/// Mean symmetric cross-entropy over the K(K-1)/2 unordered pairs.
/// Throws Degenerate for K < 2.
double agreement_loss(const std::vector<Vec>& dists);

/// Mean over variants of the per-position negative log-likelihood of
/// `target`. `dists[k][m]` is variant k's distribution at target position m.
/// Throws Degenerate on an empty target and Shape on misaligned input.
double pseudo_label_loss(std::span<const TokenId> target, const std::vector<std::vector<Vec>>& dists);

inline double total_loss(double agreement, double pseudo_label, const LossWeights& w) {
  return w.alpha * agreement + w.beta * pseudo_label;
}

/// Pseudo-label answer tokens followed by EOS: the teacher-forcing target.
std::vector<TokenId> pseudo_label_target(const model::Vocabulary& vocab, const std::string& answer);

// Everything the objective depends on apart from the head: token sequences
// and hidden states are held fixed while differentiating.
struct ObjectiveInputs {
  // Mean hidden state over each variant's emitted positions. Empty decodings
  // have no value; their distribution is uniform and carries no gradient.
  std::vector<std::optional<Vec>> mean_hidden;
  // Teacher-forced states: forced_hidden[k][m] predicts target[m].
  std::vector<std::vector<Vec>> forced_hidden;
  std::vector<TokenId> target;

  std::size_t variants() const { return mean_hidden.size(); }
};

ObjectiveInputs prepare_objective(const model::FrozenBackbone& backbone,
                                  std::span<const model::Variant> variants,
                                  std::span<const model::DecodeResult> decodes,
                                  std::span<const TokenId> target);

/// Per-variant agreement distributions p_k; uniform for empty decodings.
std::vector<Vec> agreement_distributions(const model::LMHead& head, const ObjectiveInputs& in);

struct LossBreakdown {
  double agreement = 0.0;
  double pseudo_label = 0.0;
  double total = 0.0;
};

LossBreakdown evaluate_objective(const model::LMHead& head, const ObjectiveInputs& in,
                                 const LossWeights& w);

/// Analytic gradient of alpha * agreement + beta * pseudo_label.
HeadGradient objective_gradient(const model::LMHead& head, const ObjectiveInputs& in,
                                const LossWeights& w);

/// Gradient for a live group. Every decoding must have been produced by
/// `head` (checked by fingerprint, Contract error otherwise).
HeadGradient grad_total(const model::LMHead& head, const model::FrozenBackbone& backbone,
                        std::span<const model::Variant> variants,
                        std::span<const model::DecodeResult> decodes,
                        std::span<const TokenId> target, const LossWeights& w);

/// head -= lr * grad
void apply_update(model::LMHead& head, const HeadGradient& grad, double lr);

}  // namespace ttc::losses
