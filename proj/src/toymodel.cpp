#include "ttc/toymodel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>

#include "ttc/error.hpp"
#include "ttc/rng.hpp"
#include "ttc/textsim.hpp"

namespace ttc::model {

void multiply_add(const Matrix& m, std::span<const double> x, std::span<double> out) {
  if (x.size() != m.cols || out.size() != m.rows) {
    fail(ErrorKind::Shape, "matrix-vector product: dimension mismatch");
  }
  for (std::size_t r = 0; r < m.rows; ++r) {
    const auto row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
}

const char* to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::Rephrase: return "rephrase";
    case TaskKind::Restyle: return "restyle";
    case TaskKind::Mask: return "mask";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "rephrase") return TaskKind::Rephrase;
  if (name == "restyle") return TaskKind::Restyle;
  if (name == "mask") return TaskKind::Mask;
  fail(ErrorKind::Parse, "unknown task_kind '" + std::string(name) + "'");
}

// --- Vocabulary --------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3) fail(ErrorKind::Config, "vocabulary needs BOS, EOS and one content token");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty()) fail(ErrorKind::Config, "vocabulary token " + std::to_string(i) + " is empty");
    if (i >= 2) {
      // Content tokens must be fixed points of similarity tokenization.
      const auto normalized = textsim::tokenize(t);
      if (normalized.size() != 1 || normalized.front() != t) {
        fail(ErrorKind::Config, "vocabulary token '" + t + "' is not a normalized word");
      }
    }
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
      fail(ErrorKind::Config, "duplicate vocabulary token '" + t + "'");
    }
  }
}

Vocabulary Vocabulary::synthetic(std::size_t size) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  const std::size_t n_syll = kConsonants.size() * kVowels.size();
  if (size < 3) fail(ErrorKind::Config, "vocabulary size must be at least 3");
  if (size - 2 > n_syll * n_syll) fail(ErrorKind::Config, "vocabulary size too large");

  const auto syllable = [&](std::size_t s) {
    return std::string{kConsonants[s / kVowels.size()], kVowels[s % kVowels.size()]};
  };
  std::vector<std::string> tokens{"<bos>", "<eos>"};
  for (std::size_t c = 0; c + 2 < size; ++c) {
    // (c mod n, (c / n + 3c) mod n) is injective for c < n^2.
    const std::size_t a = c % n_syll;
    const std::size_t b = (c / n_syll + 3 * c) % n_syll;
    tokens.push_back(syllable(a) + syllable(b));
  }
  return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) fail(ErrorKind::Vocabulary, "unknown token id " + std::to_string(id));
  return tokens_[id];
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) fail(ErrorKind::Vocabulary, "unknown token '" + std::string(token) + "'");
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view answer) const {
  std::vector<TokenId> ids;
  std::size_t i = 0;
  while (i < answer.size()) {
    while (i < answer.size() && std::isspace(static_cast<unsigned char>(answer[i]))) ++i;
    std::size_t j = i;
    while (j < answer.size() && !std::isspace(static_cast<unsigned char>(answer[j]))) ++j;
    if (j > i) ids.push_back(id(answer.substr(i, j - i)));
    i = j;
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

// --- Backbone ----------------------------------------------------------------

FrozenBackbone::FrozenBackbone(BackboneParams params) : params_(std::move(params)) {
  const auto& p = params_;
  const std::size_t V = p.embed.rows, E = p.embed.cols, H = p.recur.rows, F = p.feat_proj.cols;
  if (V == 0 || E == 0 || H == 0 || F == 0) fail(ErrorKind::Config, "backbone dimensions must be positive");
  if (p.recur.cols != H || p.feat_proj.rows != H || p.in_proj.rows != H || p.in_proj.cols != E ||
      p.bias.size() != H) {
    fail(ErrorKind::Shape, "backbone parameter shapes are inconsistent");
  }
  if (params_.row_alias.empty()) {
    params_.row_alias.resize(V);
    for (std::size_t v = 0; v < V; ++v) params_.row_alias[v] = static_cast<TokenId>(v);
  }
  if (params_.row_alias.size() != V) fail(ErrorKind::Shape, "row alias table must have V entries");
  for (TokenId r : params_.row_alias) {
    if (r >= V) fail(ErrorKind::Vocabulary, "row alias points outside the embedding table");
  }

  token_drive_ = Matrix(V, H);
  for (std::size_t v = 0; v < V; ++v) {
    multiply_add(p.in_proj, embedding(static_cast<TokenId>(v)), token_drive_.row(v));
  }
}

BackboneDims FrozenBackbone::dims() const {
  return {params_.embed.rows, params_.embed.cols, params_.recur.rows, params_.feat_proj.cols};
}

std::span<const double> FrozenBackbone::embedding(TokenId id) const {
  validate_token(id);
  return params_.embed.row(params_.row_alias[id]);
}

void FrozenBackbone::validate_token(TokenId id) const {
  if (id >= params_.embed.rows) fail(ErrorKind::Vocabulary, "unknown token id " + std::to_string(id));
}

void FrozenBackbone::validate(const Variant& variant) const {
  if (variant.features.size() != params_.feat_proj.cols) {
    fail(ErrorKind::Shape, "variant has " + std::to_string(variant.features.size()) +
                               " features, backbone expects " + std::to_string(params_.feat_proj.cols));
  }
  for (double x : variant.features) {
    if (!std::isfinite(x)) fail(ErrorKind::Numeric, "variant features must be finite");
  }
  for (TokenId t : variant.question) validate_token(t);
}

Vec FrozenBackbone::initial_state(const Variant& variant) const {
  validate(variant);
  const auto& p = params_;
  const std::size_t E = p.embed.cols;

  Vec question(E, 0.0);
  const std::size_t n = variant.question.size();
  if (n > 0) {
    double total = 0.0, w = 1.0;
    for (std::size_t i = n; i-- > 0;) {
      const auto row = embedding(variant.question[i]);
      for (std::size_t e = 0; e < E; ++e) question[e] += w * row[e];
      total += w;
      w *= kQuestionDecay;
    }
    for (auto& q : question) q /= total;
  }

  Vec pre = p.bias;
  multiply_add(p.feat_proj, variant.features, pre);
  multiply_add(p.in_proj, question, pre);
  for (auto& x : pre) x = std::tanh(x);
  return pre;
}

Vec FrozenBackbone::advance(std::span<const double> h, TokenId token) const {
  validate_token(token);
  Vec pre = params_.bias;
  multiply_add(params_.recur, h, pre);
  const auto drive = token_drive_.row(token);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = std::tanh(pre[i] + drive[i]);
  return pre;
}

namespace {

Matrix random_matrix(std::uint64_t seed, std::string_view tag, std::size_t rows, std::size_t cols,
                     double scale = 1.0) {
  Rng rng(seed, tag);
  Matrix m(rows, cols);
  for (auto& x : m.data) x = scale * rng.uniform(-0.5, 0.5);
  return m;
}

}  // namespace

FrozenBackbone build_backbone(std::uint64_t seed, std::size_t vocab, std::size_t embed,
                              std::size_t hidden, std::size_t features,
                              std::vector<TokenId> row_alias) {
  if (vocab == 0 || embed == 0 || hidden == 0 || features == 0) {
    fail(ErrorKind::Config, "backbone dimensions must be positive");
  }
  BackboneParams p;
  p.seed = seed;
  p.embed = random_matrix(seed, "backbone.embed", vocab, embed);
  p.feat_proj = random_matrix(seed, "backbone.feat_proj", hidden, features);
  p.recur = random_matrix(seed, "backbone.recur", hidden, hidden);
  p.in_proj = random_matrix(seed, "backbone.in_proj", hidden, embed);
  p.bias = random_matrix(seed, "backbone.bias", hidden, 1).data;
  p.row_alias = std::move(row_alias);

  double max_row_sum = 0.0;
  for (std::size_t r = 0; r < hidden; ++r) {
    double s = 0.0;
    for (double x : p.recur.row(r)) s += std::abs(x);
    max_row_sum = std::max(max_row_sum, s);
  }
  if (max_row_sum > kRecurRowSumBound) {
    const double scale = kRecurRowSumBound / max_row_sum;
    for (auto& x : p.recur.data) x *= scale;
  }
  return FrozenBackbone(std::move(p));
}

std::vector<Vec> hidden_states(const FrozenBackbone& backbone, const Variant& variant,
                               std::span<const TokenId> prefix) {
  std::vector<Vec> states;
  states.reserve(prefix.size() + 1);
  states.push_back(backbone.initial_state(variant));
  for (TokenId t : prefix) states.push_back(backbone.advance(states.back(), t));
  return states;
}

// --- Head and decoding -------------------------------------------------------

std::uint64_t LMHead::fingerprint() const {
  const auto bytes = [](const std::vector<double>& v) {
    return std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  };
  std::uint64_t h = fnv1a64(bytes(weight.data));
  h ^= splitmix64(fnv1a64(bytes(bias)) + weight.rows * 31 + weight.cols);
  return h;
}

LMHead init_head(std::uint64_t seed, std::size_t vocab, std::size_t hidden, double scale,
                 double eos_offset) {
  if (vocab < 3 || hidden == 0) fail(ErrorKind::Config, "head dimensions must be positive");
  LMHead head;
  head.weight = random_matrix(seed, "head.weight", vocab, hidden, scale);
  head.bias = random_matrix(seed, "head.bias", vocab, 1).data;
  head.bias[Vocabulary::kEos] += eos_offset;
  for (auto& b : head.bias) b *= scale;
  return head;
}

Vec logits(const LMHead& head, std::span<const double> h) {
  if (head.bias.size() != head.weight.rows) fail(ErrorKind::Shape, "head bias does not match weight rows");
  if (h.size() != head.weight.cols) {
    fail(ErrorKind::Shape, "hidden state has " + std::to_string(h.size()) + " entries, head expects " +
                               std::to_string(head.weight.cols));
  }
  Vec z = head.bias;
  multiply_add(head.weight, h, z);
  return z;
}

DecodeResult greedy_decode(const FrozenBackbone& backbone, const LMHead& head,
                           const Variant& variant, std::size_t max_len) {
  if (max_len == 0) fail(ErrorKind::Config, "max_len must be at least 1");
  if (head.vocab() != backbone.dims().vocab) fail(ErrorKind::Shape, "head and backbone vocabularies differ");

  DecodeResult out;
  out.head_fingerprint = head.fingerprint();
  Vec h = backbone.initial_state(variant);
  while (out.tokens.size() < max_len) {
    Vec z = logits(head, h);
    TokenId best = Vocabulary::kEos;
    for (TokenId v = Vocabulary::kEos + 1; v < z.size(); ++v) {
      if (z[v] > z[best]) best = v;
    }
    if (best == Vocabulary::kEos) break;
    out.tokens.push_back(best);
    out.step_logits.push_back(std::move(z));
    Vec next = backbone.advance(h, best);
    out.hidden.push_back(std::move(h));
    h = std::move(next);
  }
  return out;
}

Vec mean_logits(const DecodeResult& decoded) {
  if (decoded.step_logits.empty()) fail(ErrorKind::Degenerate, "empty decoding has no mean logits");
  Vec mean(decoded.step_logits.front().size(), 0.0);
  for (const auto& z : decoded.step_logits) {
    for (std::size_t v = 0; v < mean.size(); ++v) mean[v] += z[v];
  }
  const double inv = 1.0 / static_cast<double>(decoded.step_logits.size());
  for (auto& m : mean) m *= inv;
  return mean;
}

Vec softmax(std::span<const double> z) {
  if (z.empty()) fail(ErrorKind::Shape, "softmax of an empty vector");
  double top = z[0];
  for (double x : z) {
    if (!std::isfinite(x)) fail(ErrorKind::Numeric, "softmax input is not finite");
    top = std::max(top, x);
  }
  Vec p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - top);
    total += p[i];
  }
  for (auto& x : p) x /= total;
  return p;
}

}  // namespace ttc::model
