#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ttc/harness.hpp"
#include "ttc/losses.hpp"
#include "ttc/rng.hpp"
#include "ttc/textsim.hpp"

namespace ttc::harness {

namespace {

struct Instance {
  model::FrozenBackbone backbone;
  model::LMHead head;
  losses::ObjectiveInputs inputs;
  losses::LossWeights weights;
};

// Random small problem. A larger head scale than the base model keeps the
// distributions away from uniform so every gradient path is exercised.
Instance random_instance(std::uint64_t seed) {
  Rng rng(seed, "gradcheck.config");
  const std::size_t V = 4 + rng.below(5);
  const std::size_t H = 3 + rng.below(4);
  const std::size_t K = 2 + rng.below(3);
  const std::size_t E = 2 + rng.below(3);
  const std::size_t F = 2 + rng.below(3);

  auto backbone = model::build_backbone(splitmix64(seed), V, E, H, F);
  auto head = model::init_head(splitmix64(seed + 1), V, H, 4.0, 0.0);
  const auto vocab = model::Vocabulary::synthetic(V);

  std::vector<model::Variant> variants;
  for (std::size_t k = 0; k < K; ++k) {
    model::Variant v;
    for (std::size_t f = 0; f < F; ++f) v.features.push_back(rng.uniform(-1.0, 1.0));
    const std::size_t n = rng.below(4);
    for (std::size_t i = 0; i < n; ++i) v.question.push_back(static_cast<model::TokenId>(2 + rng.below(V - 2)));
    variants.push_back(std::move(v));
  }

  std::vector<model::DecodeResult> decodes;
  std::vector<std::string> answers;
  for (const auto& v : variants) {
    decodes.push_back(model::greedy_decode(backbone, head, v, 4));
    answers.push_back(vocab.decode(decodes.back().tokens));
  }
  const auto pseudo = textsim::select_pseudo_label(answers, {});
  const auto target = losses::pseudo_label_target(vocab, pseudo.answer);
  auto inputs = losses::prepare_objective(backbone, variants, decodes, target);

  losses::LossWeights w{rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0)};
  return Instance{std::move(backbone), std::move(head), std::move(inputs), w};
}

}  // namespace

GradcheckSummary run_gradcheck(const GradcheckOptions& options) {
  GradcheckSummary summary;
  for (std::size_t c = 0; c < options.configurations; ++c) {
    auto inst = random_instance(splitmix64(options.seed) + c);
    const auto analytic = losses::objective_gradient(inst.head, inst.inputs, inst.weights);

    const auto check = [&](double& param, double grad, const char* what, std::size_t index) {
      const double saved = param;
      param = saved + options.step;
      const double up = losses::evaluate_objective(inst.head, inst.inputs, inst.weights).total;
      param = saved - options.step;
      const double down = losses::evaluate_objective(inst.head, inst.inputs, inst.weights).total;
      param = saved;
      const double numeric = (up - down) / (2.0 * options.step);

      const double abs_err = std::abs(grad - numeric);
      const double scale = std::max(std::abs(grad), std::abs(numeric));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      ++summary.entries;
      summary.max_abs_error = std::max(summary.max_abs_error, abs_err);
      if (abs_err > options.abs_floor) summary.max_rel_error = std::max(summary.max_rel_error, rel_err);
      if (abs_err > options.abs_floor && rel_err > options.rel_tol) {
        ++summary.failures;
        char buf[200];
        std::snprintf(buf, sizeof(buf), "config %zu %s[%zu]: analytic %.10e numeric %.10e", c, what, index, grad,
                      numeric);
        summary.worst = buf;
      }
    };

    for (std::size_t i = 0; i < inst.head.weight.data.size(); ++i) {
      check(inst.head.weight.data[i], analytic.d_weight.data[i], "weight", i);
    }
    for (std::size_t i = 0; i < inst.head.bias.size(); ++i) {
      check(inst.head.bias[i], analytic.d_bias[i], "bias", i);
    }
    ++summary.configurations;
  }
  return summary;
}

}  // namespace ttc::harness
