#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>

#include "ttc/error.hpp"
#include "ttc/harness.hpp"

using namespace ttc;
using namespace ttc::harness;

namespace {

DatasetSpec small_spec(model::TaskKind kind, double bias, std::size_t groups = 12, std::uint64_t seed = 3) {
  DatasetSpec spec;
  spec.seed = seed;
  spec.n_groups = groups;
  spec.task_kind = kind;
  spec.inconsistency_bias = bias;
  return spec;
}

std::string serialize(const Dataset& ds) {
  std::ostringstream out;
  write_dataset(ds, out);
  return out.str();
}

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

const char* kTwoGroupFixture =
    R"({"format":"ttc-dataset","version":1,"spec":{"seed":9,"n_groups":2,"K":2,"task_kind":"mask","vocab":6,"hidden":3,"embed":2,"features":2,"max_len":4,"inconsistency_bias":0.5}})"
    "\n"
    R"({"group_id":"first","task_kind":"mask","reference":["baba"],"variants":[{"features":[0.5,0.0],"question":["baba","bebo"]},{"features":[0.0,-0.25],"question":[]}]})"
    "\n"
    R"({"group_id":"second","task_kind":"mask","certified":true,"reference":[],"variants":[{"features":[1,2],"question":["bide"]},{"features":[3,4],"question":["bide"]}]})"
    "\n";

}  // namespace

TEST_CASE("hand-written dataset parses to the expected structure") {
  const auto vocab = model::Vocabulary::synthetic(6);
  REQUIRE(vocab.token(2) == "baba");
  REQUIRE(vocab.token(3) == "bebo");
  REQUIRE(vocab.token(4) == "bide");
  const auto ds = parse(kTwoGroupFixture);
  CHECK(ds.spec.seed == 9);
  CHECK(ds.spec.task_kind == model::TaskKind::Mask);
  REQUIRE(ds.groups.size() == 2);
  CHECK(ds.groups[0].group_id == "first");
  CHECK(!ds.groups[0].certified);
  CHECK(ds.groups[0].reference == "baba");
  CHECK(ds.groups[0].variants[0].features == model::Vec{0.5, 0.0});
  CHECK(ds.groups[0].variants[0].question == std::vector<TokenId>{2, 3});
  CHECK(ds.groups[0].variants[1].question.empty());
  CHECK(ds.groups[1].certified);
  CHECK(ds.groups[1].reference.empty());
  CHECK(ds.groups[1].variants[1].features == model::Vec{3.0, 4.0});
  CHECK(parse(serialize(ds)) == ds);
}

TEST_CASE("dataset parse errors name the line") {
  std::string text = kTwoGroupFixture;
  const auto cut = text.find("\n", text.find("\n") + 1);
  const std::string truncated = text.substr(0, cut - 20) + "\n";
  try {
    parse(truncated);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).starts_with("line 2:"));
  }

  auto bad_word = std::string(kTwoGroupFixture);
  bad_word.replace(bad_word.find("\"bide\""), 6, "\"zzzz\"");
  CHECK_THROWS_WITH_AS(parse(bad_word), doctest::Contains("line 3"), Error);

  auto dup = std::string(kTwoGroupFixture);
  dup.replace(dup.find("\"second\""), 8, "\"first\"");
  CHECK_THROWS_WITH_AS(parse(dup), doctest::Contains("duplicate"), Error);

  CHECK_THROWS_AS(parse(""), Error);
  CHECK_THROWS_AS(parse(text.substr(text.find("\n") + 1)), Error);
  // Dropping the last group leaves fewer groups than the header declares.
  CHECK_THROWS_WITH_AS(parse(text.substr(0, cut + 1)), doctest::Contains("declares 2 groups"), Error);
}

TEST_CASE("generation is deterministic and round-trips") {
  for (auto kind : {model::TaskKind::Rephrase, model::TaskKind::Restyle, model::TaskKind::Mask}) {
    const auto spec = small_spec(kind, 0.8);
    const auto a = generate_dataset(spec);
    const auto b = generate_dataset(spec);
    CHECK(serialize(a) == serialize(b));
    CHECK(parse(serialize(a)) == a);
    auto other = spec;
    other.seed = 4;
    CHECK(serialize(generate_dataset(other)) != serialize(a));
  }
}

TEST_CASE("zero bias leaves every variant canonical") {
  for (auto kind : {model::TaskKind::Rephrase, model::TaskKind::Restyle, model::TaskKind::Mask}) {
    const auto ds = generate_dataset(small_spec(kind, 0.0));
    for (const auto& g : ds.groups) {
      CHECK(!g.certified);
      for (const auto& v : g.variants) CHECK(v == g.variants.front());
    }
    const auto report = run_experiment(ds, toy_adapt_defaults(), {RunMode::Base});
    if (!report.modes[0].groups.empty()) CHECK(report.modes[0].aggregate.con == 100.0);
  }
}

TEST_CASE("rephrased variants share embedding rows up to order") {
  const auto spec = small_spec(model::TaskKind::Rephrase, 1.0, 30);
  const auto m = build_model(spec);
  const auto ds = generate_dataset(spec);
  const auto& alias = m.backbone.params().row_alias;
  bool any_substitution = false;
  for (const auto& g : ds.groups) {
    std::vector<TokenId> first;
    for (TokenId t : g.variants[0].question) first.push_back(alias[t]);
    std::sort(first.begin(), first.end());
    for (const auto& v : g.variants) {
      std::vector<TokenId> rows;
      for (TokenId t : v.question) {
        rows.push_back(alias[t]);
        any_substitution = any_substitution || alias[t] != t;
      }
      CHECK(v.question.front() == g.variants[0].question.front());
      std::sort(rows.begin(), rows.end());
      CHECK(rows == first);
    }
  }
  CHECK(any_substitution);
}

TEST_CASE("masked variants agree wherever they are unmasked") {
  const auto spec = small_spec(model::TaskKind::Mask, 0.8, 20);
  const auto ds = generate_dataset(spec);
  const std::size_t block = static_cast<std::size_t>(std::lround(0.8 * spec.features / 2.0));
  for (const auto& g : ds.groups) {
    for (const auto& v : g.variants) {
      std::size_t zeros = 0;
      for (double x : v.features) zeros += x == 0.0;
      CHECK(zeros >= block);
    }
    for (std::size_t f = 0; f < spec.features; ++f) {
      std::optional<double> seen;
      for (const auto& v : g.variants) {
        if (v.features[f] == 0.0) continue;
        if (seen) CHECK(*seen == v.features[f]);
        seen = v.features[f];
      }
    }
  }
}

TEST_CASE("certified groups really disagree under the base model") {
  const auto spec = small_spec(model::TaskKind::Restyle, 0.8, 20);
  const auto m = build_model(spec);
  const auto ds = generate_dataset(spec);
  std::size_t certified = 0;
  for (const auto& g : ds.groups) {
    const auto answers = adapt::decode_answers(m.backbone, m.vocab, m.base_head, g, spec.max_len);
    const bool differ = std::any_of(answers.begin(), answers.end(), [&](const auto& a) { return a != answers[0]; });
    CHECK(differ == g.certified);
    certified += g.certified;
  }
  CHECK(certified > 0);
}

TEST_CASE("reports are self-consistent and round-trip") {
  const auto ds = generate_dataset(small_spec(model::TaskKind::Restyle, 0.8));
  const auto report = run_experiment(ds, toy_adapt_defaults(), {RunMode::Base, RunMode::Constant, RunMode::Adaptive});
  CHECK_NOTHROW(check_report_consistency(report));
  const auto text = report_to_json(report, false);
  const auto back = report_from_json(text);
  CHECK(report_to_json(back, false) == text);
  CHECK(back.modes == report.modes);
  CHECK(text.find("timing") == std::string::npos);
  CHECK(report_to_json(report, true).find("timing") != std::string::npos);

  // Tampering with an aggregate is caught on load.
  auto tampered = report;
  tampered.modes[1].aggregate.con += 1.0;
  CHECK_THROWS_AS(report_from_json(report_to_json(tampered, false)), Error);
  CHECK_THROWS_AS(report_from_json("{}"), Error);
  CHECK_THROWS_AS(report_from_json("not json"), Error);

  for (const auto& mode : report.modes) {
    REQUIRE(mode.delta_vs_base);
    CHECK(mode.groups.size() == ds.groups.size() - report.failed.size());
  }
  CHECK(report.modes[0].delta_vs_base->con == 0.0);
  CHECK(report_csv(report).starts_with("mode,acc,s_gt,con,s_c,o_all,n_pairs\n"));
  CHECK(report_summary(report).find("adaptive") != std::string::npos);
}

TEST_CASE("base-only run has a single aggregate block") {
  const auto ds = generate_dataset(small_spec(model::TaskKind::Mask, 0.5));
  const auto report = run_experiment(ds, toy_adapt_defaults(), {RunMode::Base});
  CHECK(report.modes.size() == 1);
  CHECK(report.modes[0].mode == RunMode::Base);
}

TEST_CASE("results do not depend on group order or thread count") {
  const auto ds = generate_dataset(small_spec(model::TaskKind::Restyle, 0.8, 16));
  const std::vector<RunMode> modes{RunMode::Base, RunMode::Adaptive};
  const auto reference = report_to_json(run_experiment(ds, toy_adapt_defaults(), modes), false);

  auto shuffled = ds;
  std::mt19937_64 gen(1);
  std::shuffle(shuffled.groups.begin(), shuffled.groups.end(), gen);
  CHECK(report_to_json(run_experiment(shuffled, toy_adapt_defaults(), modes), false) == reference);

  ExperimentOptions threaded;
  threaded.threads = 4;
  CHECK(report_to_json(run_experiment(ds, toy_adapt_defaults(), modes, threaded), false) == reference);
}

TEST_CASE("groups with no answers at all are excluded and listed") {
  // A header with a huge EOS preference cannot be built from a spec, so
  // check the bookkeeping on a dataset where failures occur naturally.
  bool seen_failure = false;
  for (std::uint64_t seed = 0; seed < 6 && !seen_failure; ++seed) {
    const auto ds = generate_dataset(small_spec(model::TaskKind::Rephrase, 0.8, 40, seed));
    const auto report = run_experiment(ds, toy_adapt_defaults(), {RunMode::Base, RunMode::Adaptive});
    for (const auto& f : report.failed) {
      seen_failure = true;
      for (const auto& mode : report.modes) {
        CHECK(std::none_of(mode.groups.begin(), mode.groups.end(),
                           [&](const GroupOutcome& g) { return g.group_id == f.group_id; }));
      }
    }
  }
  CHECK(seen_failure);
}

TEST_CASE("ablation tables") {
  const auto ds = generate_dataset(small_spec(model::TaskKind::Restyle, 0.8, 8));
  const auto cfg = toy_adapt_defaults();
  const auto weights = run_ablation(ds, cfg, AblationAxis::Weights);
  CHECK(weights.rows.size() == 5);
  CHECK(weights.rows[0].alpha == 0.1);
  CHECK(weights.rows[4].beta == 0.1);

  const auto components = run_ablation(ds, cfg, AblationAxis::LossComponents);
  REQUIRE(components.rows.size() == 4);
  CHECK(components.rows[0].label == "neither");
  const auto base = run_experiment(ds, cfg, {RunMode::Base});
  CHECK(components.rows[0].metrics == base.modes[0].aggregate);
  CHECK(components.rows[1].beta == 0.0);
  CHECK(components.rows[2].alpha == 0.0);

  const auto steps = run_ablation(ds, cfg, AblationAxis::Steps);
  CHECK(steps.rows.size() == 6);
  CHECK(steps.rows[5].steps == 6);

  const auto csv = ablation_csv(weights);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(csv.starts_with("config,mode,alpha,beta,steps,acc,s_gt,con,s_c,o_all,n_pairs\n"));
  CHECK_THROWS_AS(parse_ablation_axis("learning_rate"), Error);
}

TEST_CASE("gradient check suite passes and notices a broken gradient") {
  GradcheckOptions opts;
  opts.seed = 7;
  opts.configurations = 20;
  const auto s = run_gradcheck(opts);
  CHECK(s.passed());
  CHECK(s.configurations == 20);
  CHECK(s.entries > 20 * 12);
}

TEST_CASE("spec validation") {
  auto spec = small_spec(model::TaskKind::Restyle, 1.5);
  CHECK_THROWS_AS(generate_dataset(spec), Error);
  spec = small_spec(model::TaskKind::Restyle, 0.5);
  spec.K = 1;
  CHECK_THROWS_AS(generate_dataset(spec), Error);
}
