// Command-line front end. Talks to the engine only through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ttc/ttc.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInternal = 2;

struct Failure {
  int code;
  std::string message;
};

int exit_code_for(ttc_status s) {
  switch (s) {
    case TTC_OK: return kExitOk;
    case TTC_ERR_NUMERIC:
    case TTC_ERR_DEGENERATE:
    case TTC_ERR_CONTRACT:
    case TTC_ERR_INTERNAL: return kExitInternal;
    default: return kExitUsage;
  }
}

void check(ttc_status s) {
  if (s != TTC_OK) throw Failure{exit_code_for(s), std::string(ttc_status_name(s)) + ": " + ttc_last_error()};
}

struct DatasetDeleter {
  void operator()(ttc_dataset* d) const { ttc_dataset_free(d); }
};
struct ReportDeleter {
  void operator()(ttc_report* r) const { ttc_report_free(r); }
};
struct StringDeleter {
  void operator()(char* s) const { ttc_string_free(s); }
};
using DatasetPtr = std::unique_ptr<ttc_dataset, DatasetDeleter>;
using ReportPtr = std::unique_ptr<ttc_report, ReportDeleter>;
using OwnedString = std::unique_ptr<char, StringDeleter>;

std::string read_all(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitUsage, "cannot open '" + path + "'"};
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kExitUsage, "cannot write '" + path + "'"};
  out << text;
  if (!out) throw Failure{kExitUsage, "write failed for '" + path + "'"};
}

DatasetPtr load_dataset(const std::string& path) {
  const std::string text = read_all(path);
  ttc_dataset* raw = nullptr;
  check(ttc_dataset_parse(text.data(), text.size(), &raw));
  return DatasetPtr(raw);
}

struct SpecFlags {
  ttc_dataset_spec spec{};
  std::string task = "restyle";
};

struct AdaptFlags {
  ttc_adapt_config cfg{};
  std::string mode = "adaptive";
  std::string provider = "token_set";
  std::size_t threads = 1;
  bool carry_over = false;
};

void add_adapt_flags(CLI::App* cmd, AdaptFlags& f) {
  cmd->add_option("--adapt-mode", f.mode, "Step selection for adapted rows")
      ->check(CLI::IsMember({"constant", "adaptive"}))
      ->capture_default_str();
  cmd->add_option("--steps", f.cfg.steps, "Constant-mode step count T")->capture_default_str();
  cmd->add_option("--max-steps", f.cfg.max_steps, "Adaptive-mode T_max")->capture_default_str();
  cmd->add_option("--lr", f.cfg.lr, "Learning rate (default is 5e-4 times the toy scale 16)")->capture_default_str();
  cmd->add_option("--alpha", f.cfg.alpha, "Agreement loss weight")->capture_default_str();
  cmd->add_option("--beta", f.cfg.beta, "Pseudo-label loss weight")->capture_default_str();
  cmd->add_option("--max-len", f.cfg.max_len, "Decoding length cap")->capture_default_str();
  cmd->add_option("--tau", f.cfg.tau, "Clustering threshold")->capture_default_str();
  cmd->add_flag("--freeze-pseudo-label", f.cfg.freeze_pseudo_label, "Keep the step-0 pseudo-label");
  cmd->add_option("--provider", f.provider, "Similarity provider for metrics")
      ->check(CLI::IsMember({"token_set", "normalized_lev"}))
      ->capture_default_str();
  cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::Range(1, 256))->capture_default_str();
  cmd->add_flag("--carry-over", f.carry_over, "Keep the adapted head across groups (ablation only)");
}

ttc_run_options run_options(const AdaptFlags& f, unsigned modes) {
  ttc_run_options o;
  ttc_run_options_init(&o);
  o.modes = modes;
  o.provider = f.provider.c_str();
  o.threads = f.threads;
  o.carry_over = f.carry_over ? 1 : 0;
  return o;
}

ttc_adapt_config finish(AdaptFlags& f) {
  f.cfg.mode = f.mode == "constant" ? TTC_ADAPT_CONSTANT : TTC_ADAPT_ADAPTIVE;
  return f.cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time consistency adaptation on a synthetic toy model"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", ttc_version());

  std::uint64_t seed = 0;
  const auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option_function<std::uint64_t>(
           "--seed", [&](const std::uint64_t& s) { seed = s; }, "Seed for all randomness")
        ->default_str("0");
  };

  // gen
  SpecFlags gen;
  ttc_dataset_spec_init(&gen.spec);
  std::string gen_output = "-";
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic variant-group dataset");
  add_seed(gen_cmd);
  gen_cmd->add_option("--groups", gen.spec.n_groups, "Number of groups")->capture_default_str();
  gen_cmd->add_option("-k,--variants", gen.spec.k, "Variants per group")->capture_default_str();
  gen_cmd->add_option("--task", gen.task, "Perturbation family")
      ->check(CLI::IsMember({"rephrase", "restyle", "mask"}))
      ->capture_default_str();
  gen_cmd->add_option("--vocab", gen.spec.vocab, "Vocabulary size")->capture_default_str();
  gen_cmd->add_option("--hidden", gen.spec.hidden, "Hidden width")->capture_default_str();
  gen_cmd->add_option("--embed", gen.spec.embed, "Embedding width")->capture_default_str();
  gen_cmd->add_option("--features", gen.spec.features, "Feature width")->capture_default_str();
  gen_cmd->add_option("--max-len", gen.spec.max_len, "Decoding length cap")->capture_default_str();
  gen_cmd->add_option("--bias", gen.spec.inconsistency_bias, "Perturbation strength in [0, 1]")
      ->capture_default_str();
  gen_cmd->add_option("-o,--output", gen_output, "Dataset file ('-' for stdout)")->capture_default_str();

  // run
  AdaptFlags run;
  ttc_adapt_config_init(&run.cfg);
  std::string run_input, run_output = "-", run_modes = "base,constant,adaptive";
  bool run_timing = false;
  auto* run_cmd = app.add_subcommand("run", "Adapt every group and write a report");
  run_cmd->add_option("-i,--input", run_input, "Dataset file ('-' for stdin)")->required();
  run_cmd->add_option("-o,--output", run_output, "Report file ('-' for stdout)")->capture_default_str();
  run_cmd->add_option("--modes", run_modes, "Comma-separated subset of base,constant,adaptive")
      ->capture_default_str();
  run_cmd->add_flag("--timing", run_timing, "Include the timing block");
  add_adapt_flags(run_cmd, run);

  // ablate
  AdaptFlags abl;
  ttc_adapt_config_init(&abl.cfg);
  std::string abl_input, abl_output = "-", abl_axis;
  auto* abl_cmd = app.add_subcommand("ablate", "Sweep one configuration axis");
  abl_cmd->add_option("-i,--input", abl_input, "Dataset file ('-' for stdin)")->required();
  abl_cmd->add_option("--axis", abl_axis, "loss_components, weights or steps")->required();
  abl_cmd->add_option("-o,--output", abl_output, "CSV table ('-' for stdout)")->capture_default_str();
  add_adapt_flags(abl_cmd, abl);

  // gradcheck
  std::size_t gc_configs = 100;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the head gradient");
  add_seed(gc_cmd);
  gc_cmd->add_option("--configs", gc_configs, "Random configurations")->capture_default_str();

  // report
  std::string rep_input = "-", rep_csv;
  auto* rep_cmd = app.add_subcommand("report", "Summarise a report file");
  rep_cmd->add_option("-i,--input", rep_input, "Report file ('-' for stdin)")->capture_default_str();
  rep_cmd->add_option("--csv", rep_csv, "Also write per-group CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) {
      gen.spec.seed = seed;
      gen.spec.task_kind = gen.task.c_str();
      ttc_dataset* raw = nullptr;
      check(ttc_dataset_generate(&gen.spec, &raw));
      DatasetPtr ds(raw);
      char* text = nullptr;
      check(ttc_dataset_serialize(ds.get(), &text));
      OwnedString owned(text);
      write_all(gen_output, text);
      std::fprintf(stderr, "generated %zu groups (%zu certified)\n", ttc_dataset_group_count(ds.get()),
                   ttc_dataset_certified_count(ds.get()));
    } else if (*run_cmd) {
      unsigned modes = 0;
      std::stringstream ss(run_modes);
      for (std::string m; std::getline(ss, m, ',');) {
        if (m == "base") modes |= TTC_MODE_BASE;
        else if (m == "constant") modes |= TTC_MODE_CONSTANT;
        else if (m == "adaptive") modes |= TTC_MODE_ADAPTIVE;
        else throw Failure{kExitUsage, "unknown mode '" + m + "'\n" + run_cmd->help()};
      }
      if (modes == 0) throw Failure{kExitUsage, "no modes selected\n" + run_cmd->help()};
      auto ds = load_dataset(run_input);
      const auto cfg = finish(run);
      const auto opts = run_options(run, modes);
      ttc_report* raw = nullptr;
      check(ttc_run(ds.get(), &cfg, &opts, &raw));
      ReportPtr report(raw);
      char* text = nullptr;
      check(ttc_report_serialize(report.get(), run_timing ? 1 : 0, &text));
      OwnedString owned(text);
      write_all(run_output, text);
    } else if (*abl_cmd) {
      auto ds = load_dataset(abl_input);
      const auto cfg = finish(abl);
      const auto opts = run_options(abl, TTC_MODE_BASE);
      char* csv = nullptr;
      std::size_t rows = 0;
      check(ttc_ablate(ds.get(), &cfg, &opts, abl_axis.c_str(), &csv, &rows));
      OwnedString owned(csv);
      write_all(abl_output, csv);
      std::fprintf(stderr, "%zu rows\n", rows);
    } else if (*gc_cmd) {
      ttc_gradcheck_result r{};
      const ttc_status s = ttc_gradcheck(seed, gc_configs, &r);
      std::printf("configurations %zu entries %zu failures %zu max_abs %.3e max_rel %.3e\n", r.configurations,
                  r.entries, r.failures, r.max_abs_error, r.max_rel_error);
      check(s);
    } else if (*rep_cmd) {
      const std::string text = read_all(rep_input);
      ttc_report* raw = nullptr;
      check(ttc_report_parse(text.data(), text.size(), &raw));
      ReportPtr report(raw);
      char* summary = nullptr;
      check(ttc_report_summary(report.get(), &summary));
      OwnedString owned(summary);
      std::cout << summary;
      if (!rep_csv.empty()) {
        char* csv = nullptr;
        check(ttc_report_csv(report.get(), &csv));
        OwnedString owned_csv(csv);
        write_all(rep_csv, csv);
      }
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "ttc: %s\n", f.message.c_str());
    return f.code;
  }
  return kExitOk;
}
