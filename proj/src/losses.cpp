#include "ttc/losses.hpp"

#include <cmath>

#include "ttc/error.hpp"

namespace ttc::losses {

using model::LMHead;

namespace {

double clamped_log(double p) { return std::log(std::max(p, kLogClamp)); }

// dz = J_softmax(p) * g = p .* (g - <p, g>), accumulated into `out`.
void softmax_backward(std::span<const double> p, std::span<const double> g, double scale,
                      std::span<double> out) {
  double dot = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) dot += p[v] * g[v];
  for (std::size_t v = 0; v < p.size(); ++v) out[v] += scale * p[v] * (g[v] - dot);
}

void accumulate_outer(HeadGradient& grad, std::span<const double> dz, std::span<const double> h) {
  for (std::size_t v = 0; v < dz.size(); ++v) {
    if (dz[v] == 0.0) continue;
    auto row = grad.d_weight.row(v);
    for (std::size_t j = 0; j < h.size(); ++j) row[j] += dz[v] * h[j];
    grad.d_bias[v] += dz[v];
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0) {
    fail(ErrorKind::Config, "loss weights must be finite and nonnegative");
  }
  if (alpha == 0.0 && beta == 0.0) fail(ErrorKind::Config, "loss weights cannot both be zero");
}

HeadGradient HeadGradient::zeros_like(const LMHead& head) {
  return {Matrix(head.weight.rows, head.weight.cols), Vec(head.bias.size(), 0.0)};
}

HeadGradient& HeadGradient::operator+=(const HeadGradient& other) {
  for (std::size_t i = 0; i < d_weight.data.size(); ++i) d_weight.data[i] += other.d_weight.data[i];
  for (std::size_t i = 0; i < d_bias.size(); ++i) d_bias[i] += other.d_bias[i];
  return *this;
}

HeadGradient& HeadGradient::operator*=(double s) {
  for (auto& x : d_weight.data) x *= s;
  for (auto& x : d_bias) x *= s;
  return *this;
}

double cross_entropy(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorKind::Shape, "cross-entropy of distributions with different sizes");
  double ce = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) ce -= p[v] * clamped_log(q[v]);
  return ce;
}

double symmetric_ce(std::span<const double> p, std::span<const double> q) {
  return cross_entropy(p, q) + cross_entropy(q, p);
}

double agreement_loss(const std::vector<Vec>& dists) {
  const std::size_t K = dists.size();
  if (K < 2) fail(ErrorKind::Degenerate, "agreement loss needs at least two distributions");
  double sum = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = i + 1; j < K; ++j) sum += symmetric_ce(dists[i], dists[j]);
  }
  return 2.0 * sum / static_cast<double>(K * (K - 1));
}

double pseudo_label_loss(std::span<const TokenId> target, const std::vector<std::vector<Vec>>& dists) {
  const std::size_t M = target.size();
  if (M == 0) fail(ErrorKind::Degenerate, "pseudo-label target is empty");
  if (dists.empty()) fail(ErrorKind::EmptyGroup, "pseudo-label loss over zero variants");
  double sum = 0.0;
  for (const auto& positions : dists) {
    if (positions.size() != M) fail(ErrorKind::Shape, "variant distributions are not aligned with the target");
    double nll = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (target[m] >= positions[m].size()) fail(ErrorKind::Vocabulary, "target token outside the distribution");
      nll -= clamped_log(positions[m][target[m]]);
    }
    sum += nll / static_cast<double>(M);
  }
  return sum / static_cast<double>(dists.size());
}

std::vector<TokenId> pseudo_label_target(const model::Vocabulary& vocab, const std::string& answer) {
  auto ids = vocab.encode(answer);
  ids.push_back(model::Vocabulary::kEos);
  return ids;
}

ObjectiveInputs prepare_objective(const model::FrozenBackbone& backbone,
                                  std::span<const model::Variant> variants,
                                  std::span<const model::DecodeResult> decodes,
                                  std::span<const TokenId> target) {
  if (variants.size() != decodes.size()) fail(ErrorKind::Shape, "one decoding per variant is required");
  if (target.empty()) fail(ErrorKind::Degenerate, "pseudo-label target is empty");

  ObjectiveInputs in;
  in.target.assign(target.begin(), target.end());
  for (std::size_t k = 0; k < variants.size(); ++k) {
    const auto& d = decodes[k];
    if (d.hidden.empty()) {
      in.mean_hidden.emplace_back(std::nullopt);
    } else {
      Vec mean(d.hidden.front().size(), 0.0);
      for (const auto& h : d.hidden) {
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += h[j];
      }
      for (auto& x : mean) x /= static_cast<double>(d.hidden.size());
      in.mean_hidden.emplace_back(std::move(mean));
    }
    // States h_0..h_{M-1}: the final EOS target is never fed back.
    auto states = model::hidden_states(backbone, variants[k], target.first(target.size() - 1));
    in.forced_hidden.push_back(std::move(states));
  }
  return in;
}

std::vector<Vec> agreement_distributions(const LMHead& head, const ObjectiveInputs& in) {
  std::vector<Vec> dists;
  dists.reserve(in.variants());
  const double uniform = 1.0 / static_cast<double>(head.vocab());
  for (const auto& h : in.mean_hidden) {
    // Mean logits over positions equal the head applied to the mean state.
    dists.push_back(h ? model::softmax(model::logits(head, *h)) : Vec(head.vocab(), uniform));
  }
  return dists;
}

LossBreakdown evaluate_objective(const LMHead& head, const ObjectiveInputs& in, const LossWeights& w) {
  LossBreakdown out;
  if (w.alpha != 0.0) out.agreement = agreement_loss(agreement_distributions(head, in));
  if (w.beta != 0.0) {
    std::vector<std::vector<Vec>> forced;
    forced.reserve(in.variants());
    for (const auto& states : in.forced_hidden) {
      auto& positions = forced.emplace_back();
      for (const auto& h : states) positions.push_back(model::softmax(model::logits(head, h)));
    }
    out.pseudo_label = pseudo_label_loss(in.target, forced);
  }
  out.total = total_loss(out.agreement, out.pseudo_label, w);
  return out;
}

HeadGradient objective_gradient(const LMHead& head, const ObjectiveInputs& in, const LossWeights& w) {
  const std::size_t K = in.variants();
  const std::size_t V = head.vocab();
  HeadGradient grad = HeadGradient::zeros_like(head);

  if (w.alpha != 0.0) {
    if (K < 2) fail(ErrorKind::Degenerate, "agreement loss needs at least two variants");
    const auto p = agreement_distributions(head, in);
    std::vector<Vec> dz(K, Vec(V, 0.0));
    const double c = w.alpha * 2.0 / static_cast<double>(K * (K - 1));
    Vec g(V);
    // Sum over ordered pairs (i, j) of CE(p_i, p_j); both arguments depend
    // on the head.
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j < K; ++j) {
        if (i == j) continue;
        if (in.mean_hidden[i]) {
          for (std::size_t v = 0; v < V; ++v) g[v] = -std::log(std::max(p[j][v], kLogClamp));
          softmax_backward(p[i], g, c, dz[i]);
        }
        if (in.mean_hidden[j]) {
          for (std::size_t v = 0; v < V; ++v) g[v] = p[j][v] >= kLogClamp ? -p[i][v] / p[j][v] : 0.0;
          softmax_backward(p[j], g, c, dz[j]);
        }
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (in.mean_hidden[k]) accumulate_outer(grad, dz[k], *in.mean_hidden[k]);
    }
  }

  if (w.beta != 0.0) {
    const std::size_t M = in.target.size();
    if (M == 0) fail(ErrorKind::Degenerate, "pseudo-label target is empty");
    const double scale = w.beta / static_cast<double>(K * M);
    for (const auto& states : in.forced_hidden) {
      if (states.size() != M) fail(ErrorKind::Shape, "teacher-forced states are not aligned with the target");
      for (std::size_t m = 0; m < M; ++m) {
        Vec p = model::softmax(model::logits(head, states[m]));
        const TokenId y = in.target[m];
        if (p[y] < kLogClamp) continue;  // clamped region is flat
        for (auto& x : p) x *= scale;
        p[y] -= scale;
        accumulate_outer(grad, p, states[m]);
      }
    }
  }
  return grad;
}

HeadGradient grad_total(const LMHead& head, const model::FrozenBackbone& backbone,
                        std::span<const model::Variant> variants,
                        std::span<const model::DecodeResult> decodes,
                        std::span<const TokenId> target, const LossWeights& w) {
  w.validate();
  const std::uint64_t fp = head.fingerprint();
  for (const auto& d : decodes) {
    if (d.head_fingerprint != fp) fail(ErrorKind::Contract, "decodings are stale: the head changed since decoding");
  }
  return objective_gradient(head, prepare_objective(backbone, variants, decodes, target), w);
}

void apply_update(LMHead& head, const HeadGradient& grad, double lr) {
  if (grad.d_weight.rows != head.weight.rows || grad.d_weight.cols != head.weight.cols ||
      grad.d_bias.size() != head.bias.size()) {
    fail(ErrorKind::Shape, "gradient shape does not match the head");
  }
  for (std::size_t i = 0; i < head.weight.data.size(); ++i) head.weight.data[i] -= lr * grad.d_weight.data[i];
  for (std::size_t i = 0; i < head.bias.size(); ++i) head.bias[i] -= lr * grad.d_bias[i];
}

}  // namespace ttc::losses
