#include "ttc/evalmetrics.hpp"

#include "ttc/error.hpp"
#include "ttc/textsim.hpp"

namespace ttc::metrics {

namespace {

void require_answers(const std::vector<std::string>& answers, std::size_t at_least) {
  if (answers.size() < at_least) {
    fail(answers.empty() ? ErrorKind::EmptyGroup : ErrorKind::Degenerate,
         "metric needs at least " + std::to_string(at_least) + " answers");
  }
}

template <typename F>
void for_each_pair(const std::vector<std::string>& answers, F&& f) {
  for (std::size_t i = 0; i < answers.size(); ++i) {
    for (std::size_t j = i + 1; j < answers.size(); ++j) f(answers[i], answers[j]);
  }
}

}  // namespace

SimilarityProvider token_set_provider() {
  return {"token_set", [](std::string_view a, std::string_view b) { return textsim::token_set_similarity(a, b); }};
}

SimilarityProvider normalized_lev_provider() {
  return {"normalized_lev",
          [](std::string_view a, std::string_view b) { return textsim::normalized_similarity(a, b); }};
}

SimilarityProvider provider_by_name(std::string_view name) {
  if (name == "token_set") return token_set_provider();
  if (name == "normalized_lev") return normalized_lev_provider();
  fail(ErrorKind::Config, "unknown similarity provider '" + std::string(name) + "'");
}

double fuzzy_accuracy(const std::vector<std::string>& answers, std::string_view reference) {
  require_answers(answers, 1);
  std::size_t hits = 0;
  for (const auto& a : answers) {
    if (textsim::token_set_similarity(a, reference) * 100.0 >= kAccuracyThreshold) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(answers.size());
}

double similarity_gt(const std::vector<std::string>& answers, std::string_view reference,
                     const SimilarityProvider& provider) {
  require_answers(answers, 1);
  double sum = 0.0;
  for (const auto& a : answers) sum += provider(a, reference);
  return 100.0 * sum / static_cast<double>(answers.size());
}

double consistency_acc(const std::vector<std::string>& answers, const SimilarityProvider& provider) {
  require_answers(answers, 2);
  std::size_t hits = 0, pairs = 0;
  for_each_pair(answers, [&](const std::string& a, const std::string& b) {
    if (provider(a, b) >= kConsistencyThreshold) ++hits;
    ++pairs;
  });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(pairs);
}

double consistency_sim(const std::vector<std::string>& answers, const SimilarityProvider& provider) {
  require_answers(answers, 2);
  double sum = 0.0;
  std::size_t pairs = 0;
  for_each_pair(answers, [&](const std::string& a, const std::string& b) {
    sum += provider(a, b);
    ++pairs;
  });
  return 100.0 * sum / static_cast<double>(pairs);
}

double overall(double acc, double s_gt, double con, double s_c) {
  const double correctness = 0.5 * (acc + s_gt);
  const double consistency = 0.5 * (con + s_c);
  if (correctness + consistency == 0.0) return 0.0;
  return 2.0 * correctness * consistency / (correctness + consistency);
}

GroupMetrics evaluate_group(const std::vector<std::string>& answers, std::string_view reference,
                            const SimilarityProvider& provider) {
  GroupMetrics m;
  m.acc = fuzzy_accuracy(answers, reference);
  m.s_gt = similarity_gt(answers, reference, provider);
  m.con = consistency_acc(answers, provider);
  m.s_c = consistency_sim(answers, provider);
  m.o_all = overall(m.acc, m.s_gt, m.con, m.s_c);
  m.n_pairs = static_cast<long long>(answers.size() * (answers.size() - 1) / 2);
  return m;
}

GroupMetrics aggregate(const std::vector<GroupMetrics>& per_group) {
  if (per_group.empty()) fail(ErrorKind::EmptyGroup, "cannot aggregate an empty metric list");
  GroupMetrics out;
  for (const auto& g : per_group) {
    out.acc += g.acc;
    out.s_gt += g.s_gt;
    out.con += g.con;
    out.s_c += g.s_c;
    out.n_pairs += g.n_pairs;
  }
  const double n = static_cast<double>(per_group.size());
  out.acc /= n;
  out.s_gt /= n;
  out.con /= n;
  out.s_c /= n;
  out.o_all = overall(out.acc, out.s_gt, out.con, out.s_c);
  return out;
}

}  // namespace ttc::metrics
