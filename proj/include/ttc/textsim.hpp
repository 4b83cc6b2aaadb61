#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ttc::textsim {

// Similarity threshold for grouping responses into one cluster.
struct ClusterConfig {
  double tau = 0.85;
};

// Consensus answer of a response set: the exact-string mode of the largest
// similarity cluster.
struct PseudoLabel {
  std::string answer;
  std::vector<std::size_t> cluster_members;  // ascending variant indices
  std::size_t cluster_size = 0;
};

using Cluster = std::vector<std::size_t>;

/// Lowercases, splits on ASCII whitespace and strips leading/trailing
/// punctuation from each token. Tokens that become empty are dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Unit-cost edit distance over bytes.
std::size_t levenshtein(std::string_view a, std::string_view b);

/// 1 - levenshtein / max length; 1 when both strings are empty.
double normalized_similarity(std::string_view a, std::string_view b);

/// Order-insensitive token-set ratio.
///
/// With A and B the deduplicated token sets, three canonical strings are
/// built from sorted tokens: s0 = A∩B, s1 = s0 + A∖B, s2 = s0 + B∖A, and the
/// result is the best normalized_similarity among (s0,s1), (s0,s2), (s1,s2).
/// Two empty token sets score 1; exactly one empty set scores 0.
double token_set_similarity(std::string_view a, std::string_view b);

/// Connected components of the graph joining i and j when
/// token_set_similarity >= tau. Clusters are ordered by descending size, then
/// by smallest member; members are ascending. Throws on an empty list.
std::vector<Cluster> cluster_responses(const std::vector<std::string>& responses,
                                       const ClusterConfig& cfg);

/// Largest cluster (ties: the cluster holding the lexicographically smallest
/// string), then its most frequent exact string (ties: lexicographically
/// smallest). Invariant under permutation of `responses`.
PseudoLabel select_pseudo_label(const std::vector<std::string>& responses,
                                const ClusterConfig& cfg);

}  // namespace ttc::textsim
