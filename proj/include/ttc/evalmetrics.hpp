#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace ttc::metrics {

/// Fuzzy-match threshold for accuracy, on the 0-100 scale (inclusive).
inline constexpr double kAccuracyThreshold = 85.0;
/// Pairwise similarity threshold for consistency accuracy (inclusive).
inline constexpr double kConsistencyThreshold = 0.7;

// Named, symmetric answer-similarity function with values in [0, 1].
struct SimilarityProvider {
  std::string name;
  std::function<double(std::string_view, std::string_view)> score;

  double operator()(std::string_view a, std::string_view b) const { return score(a, b); }
};

SimilarityProvider token_set_provider();
SimilarityProvider normalized_lev_provider();
/// "token_set" or "normalized_lev"; throws Config otherwise.
SimilarityProvider provider_by_name(std::string_view name);

// All scores on the 0-100 scale.
struct GroupMetrics {
  double acc = 0.0;
  double s_gt = 0.0;
  double con = 0.0;
  double s_c = 0.0;
  double o_all = 0.0;
  long long n_pairs = 0;

  bool operator==(const GroupMetrics&) const = default;
};

double fuzzy_accuracy(const std::vector<std::string>& answers, std::string_view reference);
double similarity_gt(const std::vector<std::string>& answers, std::string_view reference,
                     const SimilarityProvider& provider);
double consistency_acc(const std::vector<std::string>& answers, const SimilarityProvider& provider);
double consistency_sim(const std::vector<std::string>& answers, const SimilarityProvider& provider);

/// Harmonic mean of mean(acc, s_gt) and mean(con, s_c); 0 when both are 0.
double overall(double acc, double s_gt, double con, double s_c);

GroupMetrics evaluate_group(const std::vector<std::string>& answers, std::string_view reference,
                            const SimilarityProvider& provider);

/// Unweighted mean of each score, n_pairs summed, o_all recomputed from the
/// aggregated components. Throws EmptyGroup on an empty list.
GroupMetrics aggregate(const std::vector<GroupMetrics>& per_group);

}  // namespace ttc::metrics
