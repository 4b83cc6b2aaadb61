#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ttc::model {

using TokenId = std::uint32_t;
using Vec = std::vector<double>;

// Dense row-major matrix. Small enough that plain loops are the fastest and
// keep every result bit-reproducible.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// out += m * x
void multiply_add(const Matrix& m, std::span<const double> x, std::span<double> out);

class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;

  /// tokens[0] and tokens[1] are the BOS and EOS markers. Content tokens must
  /// be lowercase words without whitespace or punctuation so that answer
  /// strings survive similarity tokenization unchanged.
  explicit Vocabulary(std::vector<std::string> tokens);

  /// `<bos>`, `<eos>` followed by V-2 generated pronounceable words.
  static Vocabulary synthetic(std::size_t size);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Whitespace-separated words to ids.
  std::vector<TokenId> encode(std::string_view answer) const;
  /// Ids to a single-space-joined answer string.
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// One input variant: feature vector (stands in for the image) and question.
struct Variant {
  Vec features;
  std::vector<TokenId> question;

  bool operator==(const Variant&) const = default;
};

enum class TaskKind { Rephrase, Restyle, Mask };

const char* to_string(TaskKind kind) noexcept;
/// Throws Parse on an unknown name.
TaskKind parse_task_kind(std::string_view name);

// One test point: K semantically equivalent variants and the reference
// answer (space-joined vocabulary words; used only for evaluation).
struct VariantGroup {
  std::string group_id;
  TaskKind task_kind = TaskKind::Rephrase;
  std::vector<Variant> variants;
  std::string reference;
  // True when the generator verified that the base model answers at least
  // two variants differently.
  bool certified = false;

  bool operator==(const VariantGroup&) const = default;
};

struct BackboneDims {
  std::size_t vocab = 0;    // V
  std::size_t embed = 0;    // E
  std::size_t hidden = 0;   // H
  std::size_t features = 0; // F
};

struct BackboneParams {
  std::uint64_t seed = 0;
  Matrix embed;      // V x E
  Matrix feat_proj;  // H x F
  Matrix recur;      // H x H
  Matrix in_proj;    // H x E
  Vec bias;          // H
  // Embedding row used for each token id. Synonyms share a row.
  std::vector<TokenId> row_alias;
};

/// Weight on question position i (0-based) of n: decay^(n-1-i), normalized
/// to sum 1. Later words weigh more, so reordering a question moves h_0
/// while synonym substitution does not.
inline constexpr double kQuestionDecay = 0.7;

/// Largest absolute row sum allowed for the recurrence matrix.
inline constexpr double kRecurRowSumBound = 0.9;

// Frozen contractive tanh recurrence. Immutable after construction.
class FrozenBackbone {
 public:
  explicit FrozenBackbone(BackboneParams params);

  const BackboneParams& params() const { return params_; }
  BackboneDims dims() const;

  std::span<const double> embedding(TokenId id) const;

  /// Initial state h_0 from the variant alone.
  Vec initial_state(const Variant& variant) const;
  /// h_next = tanh(recur * h + in_proj * embed[token] + bias)
  Vec advance(std::span<const double> h, TokenId token) const;

  void validate(const Variant& variant) const;
  void validate_token(TokenId id) const;

 private:
  BackboneParams params_;
  Matrix token_drive_;  // V x H, in_proj * embed[row_alias[v]]
};

/// Deterministic backbone: each matrix is filled from Rng(seed, "<name>")
/// with entries uniform in [-0.5, 0.5); recur is then scaled so its largest
/// absolute row sum is at most kRecurRowSumBound. `row_alias` defaults to the
/// identity.
FrozenBackbone build_backbone(std::uint64_t seed, std::size_t vocab, std::size_t embed,
                              std::size_t hidden, std::size_t features,
                              std::vector<TokenId> row_alias = {});

/// Hidden states h_0 .. h_n for a teacher-forced prefix of length n; h_m is
/// the state that predicts output position m+1.
std::vector<Vec> hidden_states(const FrozenBackbone& backbone, const Variant& variant,
                               std::span<const TokenId> prefix);

// Trainable linear language-model head.
struct LMHead {
  Matrix weight;  // V x H
  Vec bias;       // V

  std::size_t vocab() const { return weight.rows; }
  std::size_t hidden() const { return weight.cols; }

  /// FNV-1a over the raw parameter bytes; identifies the exact head used for
  /// a decoding.
  std::uint64_t fingerprint() const;

  bool operator==(const LMHead&) const = default;
};

/// Head with weight entries uniform in [-1/2, 1/2), bias entries in
/// [-1/2, 1/2) plus `eos_offset` on the EOS bias, everything multiplied by
/// `scale`.
LMHead init_head(std::uint64_t seed, std::size_t vocab, std::size_t hidden, double scale,
                 double eos_offset);

Vec logits(const LMHead& head, std::span<const double> h);

struct DecodeResult {
  std::vector<TokenId> tokens;   // EOS excluded
  std::vector<Vec> step_logits;  // one per emitted token
  std::vector<Vec> hidden;       // state that produced each emitted token
  std::uint64_t head_fingerprint = 0;

  std::size_t length() const { return tokens.size(); }
  bool operator==(const DecodeResult&) const = default;
};

/// Greedy decoding from h_0. BOS is never emitted; argmax ties go to the
/// smallest id; stops at EOS or after max_len tokens.
DecodeResult greedy_decode(const FrozenBackbone& backbone, const LMHead& head,
                           const Variant& variant, std::size_t max_len);

/// Mean of the per-step logits. Throws Degenerate when nothing was emitted.
Vec mean_logits(const DecodeResult& decoded);

/// Stable softmax. Throws Numeric on non-finite input.
Vec softmax(std::span<const double> z);

}  // namespace ttc::model
