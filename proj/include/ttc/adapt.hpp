#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "ttc/losses.hpp"
#include "ttc/textsim.hpp"
#include "ttc/toymodel.hpp"

namespace ttc::adapt {

enum class Mode { Constant, Adaptive };

const char* to_string(Mode mode) noexcept;

struct AdaptConfig {
  Mode mode = Mode::Adaptive;
  std::size_t steps = 2;      // constant mode
  std::size_t max_steps = 4;  // adaptive mode
  double lr = 5e-4;
  losses::LossWeights weights{};
  std::size_t max_len = 8;
  textsim::ClusterConfig cluster{};
  // Keep the t=0 pseudo-label for every step instead of recomputing it.
  bool freeze_pseudo_label = false;

  void validate() const;
  std::size_t step_count() const { return mode == Mode::Constant ? steps : max_steps; }
};

struct StepRecord {
  std::size_t step = 0;
  std::vector<std::string> answers;
  textsim::PseudoLabel pseudo_label;
  std::optional<double> loss;  // loss that drove the update into this step
  double score = 0.0;
};

struct AdaptationTrace {
  std::string group_id;
  std::vector<StepRecord> records;
  std::size_t selected_step = 0;
  std::vector<std::string> final_answers;
  std::vector<bool> degenerate;  // variant produced an empty decoding at some step
  bool failed = false;
  std::string failure;
};

/// Mean token-set similarity over all unordered pairs drawn from the K
/// answers plus the pseudo-label (K+1 items). Throws Degenerate for K < 2.
double step_score(const std::vector<std::string>& answers, const std::string& pseudo_label);

// Value copy of a head. Never aliases the live head.
class HeadSnapshot {
 public:
  explicit HeadSnapshot(model::LMHead head) : head_(std::move(head)) {}
  const model::LMHead& head() const { return head_; }
  bool operator==(const HeadSnapshot&) const = default;

 private:
  model::LMHead head_;
};

HeadSnapshot snapshot_head(const model::LMHead& head);
model::LMHead restore_head(const HeadSnapshot& snapshot);

struct AdaptResult {
  AdaptationTrace trace;
  model::LMHead final_head;  // working head after the last update
};

/// Test-time adaptation of one variant group. `base_head` is never modified;
/// all updates go to a private copy.
AdaptResult adapt_group(const model::FrozenBackbone& backbone, const model::Vocabulary& vocab,
                        const model::LMHead& base_head, const model::VariantGroup& group,
                        const AdaptConfig& cfg);

/// Decoded answer strings for every variant under `head`.
std::vector<std::string> decode_answers(const model::FrozenBackbone& backbone,
                                        const model::Vocabulary& vocab, const model::LMHead& head,
                                        const model::VariantGroup& group, std::size_t max_len);

}  // namespace ttc::adapt
