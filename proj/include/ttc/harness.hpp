#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ttc/adapt.hpp"
#include "ttc/evalmetrics.hpp"
#include "ttc/toymodel.hpp"

namespace ttc::harness {

using model::TaskKind;
using model::TokenId;
using model::VariantGroup;

// --- Datasets ----------------------------------------------------------------

struct DatasetSpec {
  std::uint64_t seed = 0;
  std::size_t n_groups = 50;
  std::size_t K = 4;
  TaskKind task_kind = TaskKind::Restyle;
  std::size_t vocab = 64;
  std::size_t hidden = 32;
  std::size_t embed = 16;
  std::size_t features = 16;
  std::size_t max_len = 8;
  double inconsistency_bias = 0.5;

  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

/// Words per generated question. The first word is the anchor and never moves.
inline constexpr std::size_t kQuestionLength = 6;
/// Perturbation redraws per group before it is accepted uncertified.
inline constexpr std::size_t kCertifyAttempts = 64;
/// Per-coordinate restyle noise amplitude at inconsistency_bias = 1.
inline constexpr double kRestyleNoise = 1.0;
/// Overall scale of the base head. Greedy decoding is invariant to it; it
/// only sets the logit margins that adaptation has to overcome.
inline constexpr double kHeadScale = 0.1;
/// Added to the EOS bias (before scaling) so most answers stop after 1-3 words.
inline constexpr double kEosOffset = 1.25;
/// Multiplier on the nominal learning rate for this toy model. Its head sees
/// 64 logits and a 32-wide state instead of a full LM vocabulary, so the
/// nominal 5e-4 barely moves it within T_max steps.
inline constexpr double kToyLrScale = 16.0;

/// Adaptation defaults with the learning rate multiplied by kToyLrScale.
adapt::AdaptConfig toy_adapt_defaults();

// Frozen backbone, its vocabulary and the untouched base head, all derived
// from the dataset seed and dimensions.
struct ToyModel {
  model::Vocabulary vocab;
  model::FrozenBackbone backbone;
  model::LMHead base_head;
  // (canonical, alias) token pairs sharing one embedding row.
  std::vector<std::pair<TokenId, TokenId>> synonyms;
};

ToyModel build_model(const DatasetSpec& spec);

struct Dataset {
  DatasetSpec spec;
  std::vector<VariantGroup> groups;

  bool operator==(const Dataset&) const = default;
};

/// Deterministic in spec.seed. Each group is redrawn until the base model
/// answers at least two variants differently (then `certified` is set), for
/// at most kCertifyAttempts draws.
Dataset generate_dataset(const DatasetSpec& spec);

/// Line-delimited JSON: a header line carrying the spec, then one group per
/// line. Doubles are written in shortest round-trip form.
void write_dataset(const Dataset& dataset, std::ostream& out);
/// Validates every record against the header spec; errors name the line.
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

// --- Experiments -------------------------------------------------------------

enum class RunMode { Base, Constant, Adaptive };

const char* to_string(RunMode mode) noexcept;
RunMode parse_run_mode(std::string_view name);

struct ExperimentOptions {
  std::string provider = "token_set";
  std::size_t threads = 1;
  // Start each group from the previous group's adapted head. Experimental;
  // forces sequential processing in group order.
  bool carry_over = false;
};

struct GroupOutcome {
  std::string group_id;
  std::vector<std::string> answers;
  metrics::GroupMetrics metrics;
  std::size_t selected_step = 0;
  std::vector<double> scores;
  std::vector<double> losses;  // one per update step
  std::vector<bool> degenerate;

  bool operator==(const GroupOutcome&) const = default;
};

struct ModeResult {
  RunMode mode = RunMode::Base;
  std::vector<GroupOutcome> groups;  // ordered by group_id
  metrics::GroupMetrics aggregate;
  std::optional<metrics::GroupMetrics> delta_vs_base;

  bool operator==(const ModeResult&) const = default;
};

struct FailedGroup {
  std::string group_id;
  std::string reason;
  bool operator==(const FailedGroup&) const = default;
};

struct RunReport {
  DatasetSpec dataset;
  adapt::AdaptConfig config;
  std::string provider;
  std::vector<ModeResult> modes;
  std::vector<FailedGroup> failed;
  std::map<std::string, double> timing_seconds;  // excluded from determinism checks
};

/// Runs every requested mode over the dataset. `cfg.mode` is overridden per
/// mode. Groups whose base decodings are all empty are listed as failed and
/// excluded from every mode's metrics.
RunReport run_experiment(const Dataset& dataset, const adapt::AdaptConfig& cfg,
                         const std::vector<RunMode>& modes, const ExperimentOptions& options = {});

/// Throws Contract when a stored aggregate differs from re-aggregation of the
/// per-group entries.
void check_report_consistency(const RunReport& report);

/// JSON document. When `with_timing` is false the timing block is omitted so
/// two runs can be compared byte for byte.
std::string report_to_json(const RunReport& report, bool with_timing = true);
/// Parses and runs check_report_consistency.
RunReport report_from_json(const std::string& text);

std::string report_summary(const RunReport& report);
/// One row per mode: mode,acc,s_gt,con,s_c,o_all,n_pairs.
std::string report_csv(const RunReport& report);

// --- Ablations ---------------------------------------------------------------

enum class AblationAxis { LossComponents, Weights, Steps };

AblationAxis parse_ablation_axis(std::string_view name);
const char* to_string(AblationAxis axis) noexcept;

struct AblationRow {
  std::string label;
  std::string mode;  // base, constant or adaptive
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t steps = 0;
  metrics::GroupMetrics metrics;
};

struct AblationTable {
  AblationAxis axis = AblationAxis::Weights;
  std::vector<AblationRow> rows;
};

/// loss_components: neither / ce_only / pl_only / both.
/// weights: (alpha, beta) in {(0.1,1), (0.5,1), (1,1), (1,0.5), (1,0.1)}.
/// steps: constant mode with T = 1..6.
AblationTable run_ablation(const Dataset& dataset, const adapt::AdaptConfig& cfg, AblationAxis axis,
                           const ExperimentOptions& options = {});

/// Header: config,mode,alpha,beta,steps,acc,s_gt,con,s_c,o_all,n_pairs
std::string ablation_csv(const AblationTable& table);

// --- Gradient check ----------------------------------------------------------

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t configurations = 100;
  double step = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-8;
};

struct GradcheckSummary {
  std::size_t configurations = 0;
  std::size_t entries = 0;
  std::size_t failures = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;  // over entries whose absolute error exceeds the floor
  std::string worst;           // description of the worst entry

  bool passed() const { return failures == 0; }
};

/// Compares the analytic head gradient with central finite differences of
/// the objective on random small configurations (V 4..8, H 3..6, K 2..4,
/// both loss terms active).
GradcheckSummary run_gradcheck(const GradcheckOptions& options);

}  // namespace ttc::harness
