#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "ttc/error.hpp"
#include "ttc/harness.hpp"

namespace ttc::harness {

using nlohmann::json;
using metrics::GroupMetrics;

namespace {

constexpr std::string_view kReportFormat = "ttc-report";
constexpr int kReportVersion = 1;

// Per-group work shared by all modes.
struct GroupRun {
  std::vector<std::string> base_answers;
  bool failed = false;
  std::string reason;
};

GroupOutcome outcome_from_trace(const adapt::AdaptationTrace& trace, const std::string& reference,
                                const metrics::SimilarityProvider& provider) {
  GroupOutcome o;
  o.group_id = trace.group_id;
  o.answers = trace.final_answers;
  o.metrics = metrics::evaluate_group(o.answers, reference, provider);
  o.selected_step = trace.selected_step;
  for (const auto& r : trace.records) {
    o.scores.push_back(r.score);
    if (r.loss) o.losses.push_back(*r.loss);
  }
  o.degenerate = trace.degenerate;
  return o;
}

// Runs fn(i) for i in [0, n) on `threads` workers; results land by index.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

GroupMetrics metrics_delta(const GroupMetrics& a, const GroupMetrics& base) {
  return {a.acc - base.acc, a.s_gt - base.s_gt, a.con - base.con,
          a.s_c - base.s_c, a.o_all - base.o_all, a.n_pairs - base.n_pairs};
}

GroupMetrics aggregate_or_zero(const std::vector<GroupOutcome>& groups) {
  if (groups.empty()) return {};
  std::vector<GroupMetrics> ms;
  ms.reserve(groups.size());
  for (const auto& g : groups) ms.push_back(g.metrics);
  return metrics::aggregate(ms);
}

json metrics_to_json(const GroupMetrics& m) {
  return json{{"acc", m.acc}, {"s_gt", m.s_gt}, {"con", m.con},
              {"s_c", m.s_c}, {"o_all", m.o_all}, {"n_pairs", m.n_pairs}};
}

GroupMetrics metrics_from_json(const json& j) {
  GroupMetrics m;
  m.acc = j.at("acc").get<double>();
  m.s_gt = j.at("s_gt").get<double>();
  m.con = j.at("con").get<double>();
  m.s_c = j.at("s_c").get<double>();
  m.o_all = j.at("o_all").get<double>();
  m.n_pairs = j.at("n_pairs").get<long long>();
  return m;
}

json config_to_json(const adapt::AdaptConfig& c) {
  return json{{"steps", c.steps},
              {"max_steps", c.max_steps},
              {"lr", c.lr},
              {"alpha", c.weights.alpha},
              {"beta", c.weights.beta},
              {"max_len", c.max_len},
              {"tau", c.cluster.tau},
              {"freeze_pseudo_label", c.freeze_pseudo_label}};
}

adapt::AdaptConfig config_from_json(const json& j) {
  adapt::AdaptConfig c;
  c.steps = j.at("steps").get<std::size_t>();
  c.max_steps = j.at("max_steps").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.weights.alpha = j.at("alpha").get<double>();
  c.weights.beta = j.at("beta").get<double>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.cluster.tau = j.at("tau").get<double>();
  c.freeze_pseudo_label = j.at("freeze_pseudo_label").get<bool>();
  return c;
}

json spec_json(const DatasetSpec& s) {
  return json{{"seed", s.seed},         {"n_groups", s.n_groups}, {"K", s.K},
              {"task_kind", model::to_string(s.task_kind)},
              {"vocab", s.vocab},       {"hidden", s.hidden},     {"embed", s.embed},
              {"features", s.features}, {"max_len", s.max_len},   {"inconsistency_bias", s.inconsistency_bias}};
}

DatasetSpec spec_from(const json& j) {
  DatasetSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.n_groups = j.at("n_groups").get<std::size_t>();
  s.K = j.at("K").get<std::size_t>();
  s.task_kind = model::parse_task_kind(j.at("task_kind").get<std::string>());
  s.vocab = j.at("vocab").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.embed = j.at("embed").get<std::size_t>();
  s.features = j.at("features").get<std::size_t>();
  s.max_len = j.at("max_len").get<std::size_t>();
  s.inconsistency_bias = j.at("inconsistency_bias").get<double>();
  return s;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); }

bool metrics_close(const GroupMetrics& a, const GroupMetrics& b) {
  return close(a.acc, b.acc) && close(a.s_gt, b.s_gt) && close(a.con, b.con) && close(a.s_c, b.s_c) &&
         close(a.o_all, b.o_all) && a.n_pairs == b.n_pairs;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

std::string csv_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

std::string csv_metrics(const GroupMetrics& m) {
  return csv_number(m.acc) + "," + csv_number(m.s_gt) + "," + csv_number(m.con) + "," + csv_number(m.s_c) +
         "," + csv_number(m.o_all) + "," + std::to_string(m.n_pairs);
}

}  // namespace

const char* to_string(RunMode mode) noexcept {
  switch (mode) {
    case RunMode::Base: return "base";
    case RunMode::Constant: return "constant";
    case RunMode::Adaptive: return "adaptive";
  }
  return "unknown";
}

RunMode parse_run_mode(std::string_view name) {
  if (name == "base") return RunMode::Base;
  if (name == "constant") return RunMode::Constant;
  if (name == "adaptive") return RunMode::Adaptive;
  fail(ErrorKind::Usage, "unknown mode '" + std::string(name) + "'");
}

RunReport run_experiment(const Dataset& dataset, const adapt::AdaptConfig& cfg,
                         const std::vector<RunMode>& modes, const ExperimentOptions& options) {
  if (dataset.groups.empty()) fail(ErrorKind::EmptyGroup, "dataset has no groups");
  if (modes.empty()) fail(ErrorKind::Usage, "no run modes requested");
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const auto t_start = Clock::now();

  const ToyModel m = build_model(dataset.spec);
  const auto provider = metrics::provider_by_name(options.provider);

  // Deterministic result order regardless of dataset order.
  std::vector<std::size_t> order(dataset.groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dataset.groups[a].group_id < dataset.groups[b].group_id;
  });

  RunReport report;
  report.dataset = dataset.spec;
  report.config = cfg;
  report.provider = provider.name;

  std::vector<GroupRun> runs(order.size());
  parallel_for(order.size(), options.threads, [&](std::size_t i) {
    const auto& g = dataset.groups[order[i]];
    auto& r = runs[i];
    r.base_answers = adapt::decode_answers(m.backbone, m.vocab, m.base_head, g, cfg.max_len);
    r.failed = std::all_of(r.base_answers.begin(), r.base_answers.end(),
                           [](const std::string& a) { return a.empty(); });
    if (r.failed) r.reason = "every variant decoded to an empty answer; no pseudo-label available";
  });
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (runs[i].failed) report.failed.push_back({dataset.groups[order[i]].group_id, runs[i].reason});
  }

  std::optional<GroupMetrics> base_aggregate;
  for (RunMode mode : modes) {
    const auto t_mode = Clock::now();
    ModeResult result;
    result.mode = mode;
    std::vector<std::optional<GroupOutcome>> outcomes(order.size());

    if (mode == RunMode::Base) {
      parallel_for(order.size(), options.threads, [&](std::size_t i) {
        if (runs[i].failed) return;
        const auto& g = dataset.groups[order[i]];
        GroupOutcome o;
        o.group_id = g.group_id;
        o.answers = runs[i].base_answers;
        o.metrics = metrics::evaluate_group(o.answers, g.reference, provider);
        for (const auto& a : o.answers) o.degenerate.push_back(a.empty());
        outcomes[i] = std::move(o);
      });
    } else {
      adapt::AdaptConfig mode_cfg = cfg;
      mode_cfg.mode = mode == RunMode::Constant ? adapt::Mode::Constant : adapt::Mode::Adaptive;
      if (options.carry_over) {
        model::LMHead head = m.base_head;
        for (std::size_t i = 0; i < order.size(); ++i) {
          if (runs[i].failed) continue;
          const auto& g = dataset.groups[order[i]];
          auto res = adapt::adapt_group(m.backbone, m.vocab, head, g, mode_cfg);
          outcomes[i] = outcome_from_trace(res.trace, g.reference, provider);
          head = std::move(res.final_head);
        }
      } else {
        parallel_for(order.size(), options.threads, [&](std::size_t i) {
          if (runs[i].failed) return;
          const auto& g = dataset.groups[order[i]];
          const auto res = adapt::adapt_group(m.backbone, m.vocab, m.base_head, g, mode_cfg);
          outcomes[i] = outcome_from_trace(res.trace, g.reference, provider);
        });
      }
    }

    for (auto& o : outcomes) {
      if (o) result.groups.push_back(std::move(*o));
    }
    result.aggregate = aggregate_or_zero(result.groups);
    if (mode == RunMode::Base) base_aggregate = result.aggregate;
    report.modes.push_back(std::move(result));
    report.timing_seconds[to_string(mode)] = std::chrono::duration<double>(Clock::now() - t_mode).count();
  }

  if (base_aggregate) {
    for (auto& r : report.modes) r.delta_vs_base = metrics_delta(r.aggregate, *base_aggregate);
  }
  report.timing_seconds["total"] = std::chrono::duration<double>(Clock::now() - t_start).count();
  return report;
}

void check_report_consistency(const RunReport& report) {
  const ModeResult* base = nullptr;
  for (const auto& r : report.modes) {
    if (r.mode == RunMode::Base) base = &r;
  }
  for (const auto& r : report.modes) {
    if (!metrics_close(aggregate_or_zero(r.groups), r.aggregate)) {
      fail(ErrorKind::Contract, std::string("aggregate of mode '") + to_string(r.mode) +
                                    "' does not match its per-group entries");
    }
    if (r.delta_vs_base) {
      if (!base || !metrics_close(metrics_delta(r.aggregate, base->aggregate), *r.delta_vs_base)) {
        fail(ErrorKind::Contract, std::string("delta of mode '") + to_string(r.mode) + "' is inconsistent");
      }
    }
  }
}

std::string report_to_json(const RunReport& report, bool with_timing) {
  json modes = json::array();
  for (const auto& r : report.modes) {
    json groups = json::array();
    for (const auto& g : r.groups) {
      groups.push_back(json{{"group_id", g.group_id},
                            {"answers", g.answers},
                            {"metrics", metrics_to_json(g.metrics)},
                            {"selected_step", g.selected_step},
                            {"scores", g.scores},
                            {"losses", g.losses},
                            {"degenerate", g.degenerate}});
    }
    modes.push_back(json{{"mode", to_string(r.mode)},
                         {"aggregate", metrics_to_json(r.aggregate)},
                         {"delta_vs_base", r.delta_vs_base ? metrics_to_json(*r.delta_vs_base) : json(nullptr)},
                         {"groups", groups}});
  }
  json failed = json::array();
  for (const auto& f : report.failed) failed.push_back(json{{"group_id", f.group_id}, {"reason", f.reason}});

  json doc{{"format", kReportFormat},
           {"version", kReportVersion},
           {"dataset", spec_json(report.dataset)},
           {"config", config_to_json(report.config)},
           {"provider", report.provider},
           {"modes", modes},
           {"failed_groups", failed}};
  if (with_timing) doc["timing"] = report.timing_seconds;
  return doc.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  RunReport report;
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string{}) != kReportFormat) fail(ErrorKind::Parse, "not a run report");
    if (doc.at("version").get<int>() != kReportVersion) fail(ErrorKind::Parse, "unsupported report version");
    report.dataset = spec_from(doc.at("dataset"));
    report.config = config_from_json(doc.at("config"));
    report.provider = doc.at("provider").get<std::string>();
    for (const auto& jm : doc.at("modes")) {
      ModeResult r;
      r.mode = parse_run_mode(jm.at("mode").get<std::string>());
      r.aggregate = metrics_from_json(jm.at("aggregate"));
      if (!jm.at("delta_vs_base").is_null()) r.delta_vs_base = metrics_from_json(jm.at("delta_vs_base"));
      for (const auto& jg : jm.at("groups")) {
        GroupOutcome g;
        g.group_id = jg.at("group_id").get<std::string>();
        g.answers = jg.at("answers").get<std::vector<std::string>>();
        g.metrics = metrics_from_json(jg.at("metrics"));
        g.selected_step = jg.at("selected_step").get<std::size_t>();
        g.scores = jg.at("scores").get<std::vector<double>>();
        g.losses = jg.at("losses").get<std::vector<double>>();
        g.degenerate = jg.at("degenerate").get<std::vector<bool>>();
        r.groups.push_back(std::move(g));
      }
      report.modes.push_back(std::move(r));
    }
    for (const auto& jf : doc.at("failed_groups")) {
      report.failed.push_back({jf.at("group_id").get<std::string>(), jf.at("reason").get<std::string>()});
    }
    if (doc.contains("timing")) report.timing_seconds = doc.at("timing").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed report: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Parse) throw;
    fail(ErrorKind::Parse, std::string("malformed report: ") + e.what());
  }
  check_report_consistency(report);
  return report;
}

std::string report_summary(const RunReport& report) {
  std::ostringstream out;
  const auto& d = report.dataset;
  out << "dataset: task=" << model::to_string(d.task_kind) << " groups=" << d.n_groups << " K=" << d.K
      << " V=" << d.vocab << " H=" << d.hidden << " bias=" << d.inconsistency_bias << " seed=" << d.seed << "\n";
  const auto& c = report.config;
  out << "config: lr=" << c.lr << " alpha=" << c.weights.alpha << " beta=" << c.weights.beta
      << " T=" << c.steps << " T_max=" << c.max_steps << " tau=" << c.cluster.tau
      << " provider=" << report.provider << "\n\n";
  out << "mode        acc     s_gt    con     s_c     o_all   groups\n";
  for (const auto& r : report.modes) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %7s %7s %7s %7s %7s   %zu\n", to_string(r.mode),
                  fmt(r.aggregate.acc).c_str(), fmt(r.aggregate.s_gt).c_str(), fmt(r.aggregate.con).c_str(),
                  fmt(r.aggregate.s_c).c_str(), fmt(r.aggregate.o_all).c_str(), r.groups.size());
    out << line;
  }
  bool any_delta = false;
  for (const auto& r : report.modes) {
    if (!r.delta_vs_base || r.mode == RunMode::Base) continue;
    if (!any_delta) out << "\ndelta vs base\n";
    any_delta = true;
    const auto& m = *r.delta_vs_base;
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %+7.2f %+7.2f %+7.2f %+7.2f %+7.2f\n", to_string(r.mode), m.acc,
                  m.s_gt, m.con, m.s_c, m.o_all);
    out << line;
  }
  out << "\nfailed groups: " << report.failed.size() << "\n";
  for (const auto& f : report.failed) out << "  " << f.group_id << ": " << f.reason << "\n";
  return out.str();
}

std::string report_csv(const RunReport& report) {
  std::string out = "mode,acc,s_gt,con,s_c,o_all,n_pairs\n";
  for (const auto& r : report.modes) out += std::string(to_string(r.mode)) + "," + csv_metrics(r.aggregate) + "\n";
  return out;
}

AblationAxis parse_ablation_axis(std::string_view name) {
  if (name == "loss_components") return AblationAxis::LossComponents;
  if (name == "weights") return AblationAxis::Weights;
  if (name == "steps") return AblationAxis::Steps;
  fail(ErrorKind::Usage, "unknown ablation axis '" + std::string(name) + "'");
}

const char* to_string(AblationAxis axis) noexcept {
  switch (axis) {
    case AblationAxis::LossComponents: return "loss_components";
    case AblationAxis::Weights: return "weights";
    case AblationAxis::Steps: return "steps";
  }
  return "unknown";
}

AblationTable run_ablation(const Dataset& dataset, const adapt::AdaptConfig& cfg, AblationAxis axis,
                           const ExperimentOptions& options) {
  AblationTable table;
  table.axis = axis;
  const RunMode adapted = cfg.mode == adapt::Mode::Constant ? RunMode::Constant : RunMode::Adaptive;

  const auto run_row = [&](std::string label, RunMode mode, double alpha, double beta, std::size_t steps) {
    adapt::AdaptConfig row_cfg = cfg;
    if (mode != RunMode::Base) row_cfg.weights = {alpha, beta};
    row_cfg.steps = steps ? steps : cfg.steps;
    const auto report = run_experiment(dataset, row_cfg, {mode}, options);
    AblationRow row;
    row.label = std::move(label);
    row.mode = to_string(mode);
    row.alpha = alpha;
    row.beta = beta;
    row.steps = mode == RunMode::Base ? 0 : mode == RunMode::Constant ? row_cfg.steps : row_cfg.max_steps;
    row.metrics = report.modes.front().aggregate;
    table.rows.push_back(std::move(row));
  };

  const double a = cfg.weights.alpha, b = cfg.weights.beta;
  switch (axis) {
    case AblationAxis::LossComponents:
      // No loss means no update: the base model's answers.
      run_row("neither", RunMode::Base, 0.0, 0.0, 0);
      run_row("ce_only", adapted, a, 0.0, 0);
      run_row("pl_only", adapted, 0.0, b, 0);
      run_row("both", adapted, a, b, 0);
      break;
    case AblationAxis::Weights: {
      static constexpr std::pair<double, double> kGrid[] = {{0.1, 1.0}, {0.5, 1.0}, {1.0, 1.0}, {1.0, 0.5}, {1.0, 0.1}};
      for (auto [alpha, beta] : kGrid) {
        run_row("alpha=" + fmt(alpha) + ";beta=" + fmt(beta), adapted, alpha, beta, 0);
      }
      break;
    }
    case AblationAxis::Steps:
      for (std::size_t t = 1; t <= 6; ++t) run_row("T=" + std::to_string(t), RunMode::Constant, a, b, t);
      break;
  }
  return table;
}

std::string ablation_csv(const AblationTable& table) {
  std::string out = "config,mode,alpha,beta,steps,acc,s_gt,con,s_c,o_all,n_pairs\n";
  for (const auto& r : table.rows) {
    out += r.label + "," + r.mode + "," + csv_number(r.alpha) + "," + csv_number(r.beta) + "," +
           std::to_string(r.steps) + "," + csv_metrics(r.metrics) + "\n";
  }
  return out;
}

}  // namespace ttc::harness
