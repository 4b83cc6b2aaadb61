// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "ttc/error.hpp"
#include "ttc/evalmetrics.hpp"
#include "ttc/harness.hpp"
#include "ttc/losses.hpp"
#include "ttc/textsim.hpp"

using namespace ttc;
using harness::RunMode;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out.pass) ++failures;
  std::printf("%s criterion %d (%s): %s [%.2fs]\n", out.pass ? "PASS" : "FAIL", id, name, out.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

harness::DatasetSpec suite_spec(model::TaskKind kind, double bias, std::size_t groups) {
  harness::DatasetSpec spec;
  spec.seed = 0;
  spec.n_groups = groups;
  spec.K = 4;
  spec.vocab = 64;
  spec.hidden = 32;
  spec.max_len = 8;
  spec.task_kind = kind;
  spec.inconsistency_bias = bias;
  return spec;
}

const harness::ModeResult& mode_of(const harness::RunReport& r, RunMode m) {
  for (const auto& x : r.modes) {
    if (x.mode == m) return x;
  }
  fail(ErrorKind::Contract, "mode missing from report");
}

constexpr model::TaskKind kKinds[] = {model::TaskKind::Rephrase, model::TaskKind::Restyle, model::TaskKind::Mask};

// Criterion 4 and the first half of criterion 5 share these runs.
std::vector<harness::RunReport>& suite_reports() {
  static std::vector<harness::RunReport> reports = [] {
    std::vector<harness::RunReport> out;
    harness::ExperimentOptions opts;
    opts.threads = 4;
    for (auto kind : kKinds) {
      const auto ds = harness::generate_dataset(suite_spec(kind, 0.8, 200));
      out.push_back(harness::run_experiment(ds, harness::toy_adapt_defaults(), {RunMode::Base, RunMode::Adaptive}, opts));
    }
    return out;
  }();
  return reports;
}

}  // namespace

int main() {
  criterion(1, "gradient check", [] {
    const auto t0 = std::chrono::steady_clock::now();
    harness::GradcheckOptions opts;
    opts.seed = 7;
    const auto s = harness::run_gradcheck(opts);
    const double secs = elapsed_since(t0);
    return Outcome{s.passed() && s.configurations == 100 && secs < 60.0,
                   fmt("%zu configs, %zu entries, %zu failures, max abs %.2e, max rel %.2e", s.configurations,
                       s.entries, s.failures, s.max_abs_error, s.max_rel_error)};
  });

  criterion(2, "loss fixtures", [] {
    bool ok = true;
    std::string detail;
    for (std::size_t V : {4u, 10u, 64u}) {
      for (std::size_t K : {2u, 3u, 5u}) {
        const std::vector<model::Vec> dists(K, model::Vec(V, 1.0 / static_cast<double>(V)));
        const double agree = losses::agreement_loss(dists);
        ok = ok && std::abs(agree - 2.0 * std::log(static_cast<double>(V))) < 1e-9;
        if (V == 4 && K == 2) detail += fmt("agreement(V=4) %.6f", agree);
        const std::vector<model::TokenId> target{2, 1};
        const std::vector<std::vector<model::Vec>> per(K, std::vector<model::Vec>(target.size(), dists[0]));
        ok = ok && std::abs(losses::pseudo_label_loss(target, per) - std::log(static_cast<double>(V))) < 1e-9;
      }
    }
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      model::Vec p(6), q(6);
      for (auto& x : p) x = u(gen);
      for (auto& x : q) x = u(gen);
      const double sp = std::accumulate(p.begin(), p.end(), 0.0), sq = std::accumulate(q.begin(), q.end(), 0.0);
      for (auto& x : p) x /= sp;
      for (auto& x : q) x /= sq;
      ok = ok && losses::agreement_loss({p, q}) == losses::symmetric_ce(p, q);
    }
    return Outcome{ok, detail + ", pseudo-label ln V, K=2 agreement == symmetric CE"};
  });

  criterion(3, "pseudo-label convergence", [] {
    const auto t0 = std::chrono::steady_clock::now();
    auto spec = suite_spec(model::TaskKind::Restyle, 0.8, 100);
    spec.seed = 11;
    const auto m = harness::build_model(spec);
    const auto ds = harness::generate_dataset(spec);
    adapt::AdaptConfig cfg;
    cfg.mode = adapt::Mode::Constant;
    cfg.steps = 50;
    cfg.lr = 1e-2;
    cfg.weights = {0.0, 1.0};
    std::size_t used = 0, converged = 0;
    for (const auto& g : ds.groups) {
      if (!g.certified) continue;
      if (used == 50) break;
      ++used;
      const auto r = adapt::adapt_group(m.backbone, m.vocab, m.base_head, g, cfg);
      if (r.trace.failed) continue;
      const auto& last = r.trace.records.back();
      converged += std::all_of(last.answers.begin(), last.answers.end(),
                               [&](const std::string& a) { return a == last.pseudo_label.answer; });
    }
    const double secs = elapsed_since(t0);
    return Outcome{used == 50 && converged * 100 >= 95 * used && secs < 120.0,
                   fmt("%zu/%zu certified groups agree with the pseudo-label at T=50", converged, used)};
  });

  criterion(4, "adaptation beats base", [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& reports = suite_reports();
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& base = mode_of(reports[i], RunMode::Base).aggregate;
      const auto& ad = mode_of(reports[i], RunMode::Adaptive).aggregate;
      ok = ok && ad.con > base.con && ad.o_all > base.o_all;
      detail += fmt("%s Con %.2f->%.2f O_all %.2f->%.2f (%zu failed); ", model::to_string(kKinds[i]), base.con,
                    ad.con, base.o_all, ad.o_all, reports[i].failed.size());
    }
    const double secs = elapsed_since(t0);
    return Outcome{ok && secs < 300.0, detail + fmt("lr %.0e", harness::toy_adapt_defaults().lr)};
  });

  criterion(5, "selection never hurts", [] {
    std::size_t groups = 0, worse = 0;
    for (const auto& r : suite_reports()) {
      for (const auto& g : mode_of(r, RunMode::Adaptive).groups) {
        ++groups;
        worse += g.scores.at(g.selected_step) < g.scores.at(0);
      }
    }
    std::size_t flat = 0, flat_ok = 0;
    for (auto kind : kKinds) {
      const auto ds = harness::generate_dataset(suite_spec(kind, 0.0, 100));
      const auto r = harness::run_experiment(ds, harness::toy_adapt_defaults(), {RunMode::Base, RunMode::Adaptive});
      const auto& base = mode_of(r, RunMode::Base).groups;
      const auto& ad = mode_of(r, RunMode::Adaptive).groups;
      for (std::size_t i = 0; i < ad.size(); ++i) {
        ++flat;
        flat_ok += ad[i].selected_step == 0 && ad[i].answers == base[i].answers;
      }
    }
    return Outcome{worse == 0 && flat_ok == flat && flat > 0,
                   fmt("%zu/%zu groups with score(t*) < score(0); bias 0: %zu/%zu unchanged with t*=0", worse, groups,
                       flat_ok, flat)};
  });

  criterion(6, "metric fixtures", [] {
    const double o = metrics::overall(50, 50, 100, 100);
    const auto provider = metrics::token_set_provider();
    const double con = metrics::consistency_acc({"red apple", "apple red", "blue"}, provider);
    const std::string ref(20, 'a');
    std::string near = ref;
    near[0] = near[7] = near[13] = 'b';
    const double sim = textsim::token_set_similarity(near, ref);
    const double acc = metrics::fuzzy_accuracy({near}, ref);
    return Outcome{std::abs(o - 66.67) <= 0.01 && std::abs(con - 100.0 / 3.0) < 1e-9 && sim == 0.85 && acc == 100.0,
                   fmt("overall %.4f, consistency_acc %.4f, fuzzy match at similarity %.2f -> %.0f", o, con, sim, acc)};
  });

  criterion(7, "ablations", [] {
    const auto ds = harness::generate_dataset(suite_spec(model::TaskKind::Restyle, 0.8, 40));
    const auto cfg = harness::toy_adapt_defaults();
    const auto weights = harness::run_ablation(ds, cfg, harness::AblationAxis::Weights);
    const auto comps = harness::run_ablation(ds, cfg, harness::AblationAxis::LossComponents);
    const auto base = harness::run_experiment(ds, cfg, {RunMode::Base});
    const bool neither = !comps.rows.empty() && comps.rows[0].label == "neither" &&
                         comps.rows[0].metrics == mode_of(base, RunMode::Base).aggregate;
    return Outcome{weights.rows.size() == 5 && comps.rows.size() == 4 && neither,
                   fmt("weights %zu rows, loss_components %zu rows, neither == base: %s", weights.rows.size(),
                       comps.rows.size(), neither ? "yes" : "no")};
  });

  criterion(8, "determinism", [] {
    const auto spec = suite_spec(model::TaskKind::Mask, 0.8, 40);
    const std::vector<RunMode> modes{RunMode::Base, RunMode::Constant, RunMode::Adaptive};
    const auto once = [&] {
      return harness::report_to_json(
          harness::run_experiment(harness::generate_dataset(spec), harness::toy_adapt_defaults(), modes), false);
    };
    const std::string a = once(), b = once();

    auto shuffled = harness::generate_dataset(spec);
    std::mt19937_64 gen(99);
    std::shuffle(shuffled.groups.begin(), shuffled.groups.end(), gen);
    const std::string c =
        harness::report_to_json(harness::run_experiment(shuffled, harness::toy_adapt_defaults(), modes), false);

    const auto m = harness::build_model(spec);
    const auto ds = harness::generate_dataset(spec);
    const auto snap = adapt::snapshot_head(m.base_head);
    auto cfg = harness::toy_adapt_defaults();
    cfg.mode = adapt::Mode::Constant;
    cfg.steps = 4;
    std::size_t restored_ok = 0;
    for (const auto& g : ds.groups) {
      const auto before = adapt::decode_answers(m.backbone, m.vocab, m.base_head, g, spec.max_len);
      (void)adapt::adapt_group(m.backbone, m.vocab, m.base_head, g, cfg);
      const auto after = adapt::decode_answers(m.backbone, m.vocab, adapt::restore_head(snap), g, spec.max_len);
      restored_ok += before == after;
    }
    return Outcome{a == b && a == c && restored_ok == ds.groups.size(),
                   fmt("repeat identical: %s, shuffled identical: %s, restore reproduces %zu/%zu", a == b ? "yes" : "no",
                       a == c ? "yes" : "no", restored_ok, ds.groups.size())};
  });

  criterion(9, "oracle equivalence", [] {
    const oracle::EditScriptSearch search("abc", 7);
    const auto& strings = search.universe();
    std::size_t pairs = 0, lev_bad = 0;
    for (std::size_t i = 0; i < strings.size(); ++i) {
      const auto dist = search.distances_from(strings[i]);
      for (std::size_t j = 0; j < strings.size(); ++j) {
        ++pairs;
        lev_bad += textsim::levenshtein(strings[i], strings[j]) != static_cast<std::size_t>(dist[j]);
      }
    }

    const std::vector<std::string> words{"red", "blue", "apple", "tree", "sky", "red apple", "blue sky"};
    std::mt19937_64 gen(3);
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(0, 3);
    std::size_t sets = 0, cluster_bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<std::string> responses(6);
      for (auto& r : responses) {
        const std::size_t n = len(gen);
        for (std::size_t w = 0; w < n; ++w) r += (w ? " " : "") + words[pick(gen)];
      }
      std::vector<std::vector<double>> sim(6, std::vector<double>(6));
      for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 6; ++j) sim[i][j] = textsim::token_set_similarity(responses[i], responses[j]);
      }
      const auto got = textsim::cluster_responses(responses, {});
      const std::set<std::vector<std::size_t>> got_set(got.begin(), got.end());
      ++sets;
      cluster_bad += got_set != oracle::components(sim, 0.85);
    }
    return Outcome{lev_bad == 0 && cluster_bad == 0,
                   fmt("levenshtein: %zu/%zu pairs differ; clustering: %zu/%zu sets differ", lev_bad, pairs,
                       cluster_bad, sets)};
  });

  return failures == 0 ? 0 : 1;
}
