#include "ttc/adapt.hpp"

#include <cmath>

#include "ttc/error.hpp"

namespace ttc::adapt {

using model::DecodeResult;
using model::LMHead;

const char* to_string(Mode mode) noexcept {
  return mode == Mode::Constant ? "constant" : "adaptive";
}

void AdaptConfig::validate() const {
  if (steps < 1 || max_steps < 1) fail(ErrorKind::Config, "step counts must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorKind::Config, "learning rate must be positive");
  if (max_len < 1) fail(ErrorKind::Config, "max_len must be at least 1");
  if (!(cluster.tau >= 0.0 && cluster.tau <= 1.0)) fail(ErrorKind::Config, "tau must lie in [0, 1]");
  weights.validate();
}

double step_score(const std::vector<std::string>& answers, const std::string& pseudo_label) {
  if (answers.size() < 2) fail(ErrorKind::Degenerate, "step score needs at least two answers");
  std::vector<const std::string*> items;
  for (const auto& a : answers) items.push_back(&a);
  items.push_back(&pseudo_label);

  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      sum += textsim::token_set_similarity(*items[i], *items[j]);
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

HeadSnapshot snapshot_head(const LMHead& head) { return HeadSnapshot(head); }

LMHead restore_head(const HeadSnapshot& snapshot) { return snapshot.head(); }

namespace {

std::vector<DecodeResult> decode_all(const model::FrozenBackbone& backbone, const LMHead& head,
                                     const model::VariantGroup& group, std::size_t max_len) {
  std::vector<DecodeResult> out;
  out.reserve(group.variants.size());
  for (const auto& v : group.variants) out.push_back(model::greedy_decode(backbone, head, v, max_len));
  return out;
}

std::vector<std::string> to_answers(const model::Vocabulary& vocab, const std::vector<DecodeResult>& decodes) {
  std::vector<std::string> answers;
  answers.reserve(decodes.size());
  for (const auto& d : decodes) answers.push_back(vocab.decode(d.tokens));
  return answers;
}

}  // namespace

std::vector<std::string> decode_answers(const model::FrozenBackbone& backbone, const model::Vocabulary& vocab,
                                        const LMHead& head, const model::VariantGroup& group,
                                        std::size_t max_len) {
  return to_answers(vocab, decode_all(backbone, head, group, max_len));
}

AdaptResult adapt_group(const model::FrozenBackbone& backbone, const model::Vocabulary& vocab,
                        const LMHead& base_head, const model::VariantGroup& group, const AdaptConfig& cfg) {
  cfg.validate();
  const std::size_t K = group.variants.size();
  if (K == 0) fail(ErrorKind::EmptyGroup, "variant group '" + group.group_id + "' is empty");
  if (K < 2) fail(ErrorKind::Degenerate, "variant group '" + group.group_id + "' has a single variant");

  AdaptResult result{AdaptationTrace{}, base_head};
  AdaptationTrace& trace = result.trace;
  LMHead& head = result.final_head;
  trace.group_id = group.group_id;
  trace.degenerate.assign(K, false);

  auto decodes = decode_all(backbone, head, group, cfg.max_len);
  const auto note_degenerate = [&] {
    for (std::size_t k = 0; k < K; ++k) {
      if (decodes[k].tokens.empty()) trace.degenerate[k] = true;
    }
  };
  note_degenerate();

  StepRecord first;
  first.answers = to_answers(vocab, decodes);
  first.pseudo_label = textsim::select_pseudo_label(first.answers, cfg.cluster);
  first.score = step_score(first.answers, first.pseudo_label.answer);
  trace.records.push_back(first);

  bool all_empty = true;
  for (const auto& d : decodes) all_empty = all_empty && d.tokens.empty();
  if (all_empty) {
    trace.failed = true;
    trace.failure = "every variant decoded to an empty answer; no pseudo-label available";
    trace.final_answers = first.answers;
    return result;
  }

  const textsim::PseudoLabel frozen = first.pseudo_label;
  for (std::size_t t = 1; t <= cfg.step_count(); ++t) {
    const auto& active = cfg.freeze_pseudo_label ? frozen : trace.records.back().pseudo_label;
    const auto target = losses::pseudo_label_target(vocab, active.answer);
    const auto inputs = losses::prepare_objective(backbone, group.variants, decodes, target);
    const auto loss = losses::evaluate_objective(head, inputs, cfg.weights);
    const auto grad = losses::objective_gradient(head, inputs, cfg.weights);
    losses::apply_update(head, grad, cfg.lr);

    decodes = decode_all(backbone, head, group, cfg.max_len);
    note_degenerate();

    StepRecord rec;
    rec.step = t;
    rec.answers = to_answers(vocab, decodes);
    rec.pseudo_label =
        cfg.freeze_pseudo_label ? frozen : textsim::select_pseudo_label(rec.answers, cfg.cluster);
    rec.loss = loss.total;
    rec.score = step_score(rec.answers, rec.pseudo_label.answer);
    trace.records.push_back(std::move(rec));
  }

  if (cfg.mode == Mode::Constant) {
    trace.selected_step = cfg.steps;
  } else {
    std::size_t best = 0;
    for (std::size_t t = 1; t < trace.records.size(); ++t) {
      if (trace.records[t].score > trace.records[best].score) best = t;
    }
    trace.selected_step = best;
  }
  trace.final_answers = trace.records[trace.selected_step].answers;
  return result;
}

}  // namespace ttc::adapt
