#include "ttc/textsim.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <set>

#include "ttc/error.hpp"

namespace ttc::textsim {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out += p;
  }
  return out;
}

// Minimal union-find over response indices.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::size_t lo = i, hi = j;
    while (lo < hi && is_punct(text[lo])) ++lo;
    while (hi > lo && is_punct(text[hi - 1])) --hi;
    if (lo < hi) {
      std::string tok(text.substr(lo, hi - lo));
      for (auto& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return tokens;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return a.size();

  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t subst = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, subst});
      diag = up;
    }
  }
  return row[b.size()];
}

double normalized_similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

double token_set_similarity(std::string_view a, std::string_view b) {
  const auto ta = tokenize(a);
  const auto tb = tokenize(b);
  const std::set<std::string> sa(ta.begin(), ta.end());
  const std::set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  if (sa.empty() || sb.empty()) return 0.0;

  std::vector<std::string> common, only_a, only_b;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  std::set_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(only_a));
  std::set_difference(sb.begin(), sb.end(), sa.begin(), sa.end(), std::back_inserter(only_b));

  const std::string s0 = join(common);
  const std::string s1 = join({s0, join(only_a)});
  const std::string s2 = join({s0, join(only_b)});
  return std::max({normalized_similarity(s0, s1), normalized_similarity(s0, s2),
                   normalized_similarity(s1, s2)});
}

std::vector<Cluster> cluster_responses(const std::vector<std::string>& responses,
                                       const ClusterConfig& cfg) {
  if (responses.empty()) fail(ErrorKind::EmptyGroup, "cannot cluster an empty variant group");
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) fail(ErrorKind::Config, "tau must lie in [0, 1]");

  const std::size_t n = responses.size();
  DisjointSets sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sets.find(i) == sets.find(j)) continue;
      if (token_set_similarity(responses[i], responses[j]) >= cfg.tau) sets.unite(i, j);
    }
  }

  std::map<std::size_t, Cluster> by_root;
  for (std::size_t i = 0; i < n; ++i) by_root[sets.find(i)].push_back(i);

  std::vector<Cluster> clusters;
  clusters.reserve(by_root.size());
  for (auto& [root, members] : by_root) clusters.push_back(std::move(members));
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& x, const Cluster& y) {
    if (x.size() != y.size()) return x.size() > y.size();
    return x.front() < y.front();
  });
  return clusters;
}

PseudoLabel select_pseudo_label(const std::vector<std::string>& responses,
                                const ClusterConfig& cfg) {
  const auto clusters = cluster_responses(responses, cfg);

  const auto smallest_string = [&](const Cluster& c) -> const std::string& {
    const std::string* best = &responses[c.front()];
    for (std::size_t idx : c) best = std::min(best, &responses[idx], [](auto* x, auto* y) { return *x < *y; });
    return *best;
  };

  const Cluster* chosen = &clusters.front();
  for (const auto& c : clusters) {
    if (c.size() != chosen->size()) break;
    if (smallest_string(c) < smallest_string(*chosen)) chosen = &c;
  }

  std::map<std::string, std::size_t> counts;
  for (std::size_t idx : *chosen) ++counts[responses[idx]];
  // std::map iterates in lexicographic order, so the first maximum wins ties.
  auto mode = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > mode->second) mode = it;
  }

  return PseudoLabel{mode->first, *chosen, chosen->size()};
}

}  // namespace ttc::textsim
