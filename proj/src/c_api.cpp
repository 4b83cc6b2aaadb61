#include "ttc/ttc.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "ttc/error.hpp"
#include "ttc/harness.hpp"
#include "ttc/textsim.hpp"

struct ttc_dataset {
  ttc::harness::Dataset value;
};

struct ttc_report {
  ttc::harness::RunReport value;
};

namespace {

thread_local std::string g_last_error;

ttc_status status_for(ttc::ErrorKind kind) {
  using ttc::ErrorKind;
  switch (kind) {
    case ErrorKind::Config: return TTC_ERR_CONFIG;
    case ErrorKind::Usage: return TTC_ERR_USAGE;
    case ErrorKind::Parse: return TTC_ERR_PARSE;
    case ErrorKind::Io: return TTC_ERR_IO;
    case ErrorKind::Vocabulary: return TTC_ERR_VOCABULARY;
    case ErrorKind::Shape: return TTC_ERR_SHAPE;
    case ErrorKind::EmptyGroup: return TTC_ERR_EMPTY_GROUP;
    case ErrorKind::Numeric: return TTC_ERR_NUMERIC;
    case ErrorKind::Degenerate: return TTC_ERR_DEGENERATE;
    case ErrorKind::Contract: return TTC_ERR_CONTRACT;
  }
  return TTC_ERR_INTERNAL;
}

ttc_status set_error(ttc_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <typename Body>
ttc_status guarded(Body&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const ttc::Error& e) {
    return set_error(status_for(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(TTC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(TTC_ERR_INTERNAL, e.what());
  }
}

#define TTC_REQUIRE(cond, what) \
  do {                          \
    if (!(cond)) return set_error(TTC_ERR_USAGE, what); \
  } while (0)

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ttc::harness::DatasetSpec to_spec(const ttc_dataset_spec& s) {
  ttc::harness::DatasetSpec out;
  out.seed = s.seed;
  out.n_groups = s.n_groups;
  out.K = s.k;
  out.task_kind = ttc::model::parse_task_kind(s.task_kind ? s.task_kind : "");
  out.vocab = s.vocab;
  out.hidden = s.hidden;
  out.embed = s.embed;
  out.features = s.features;
  out.max_len = s.max_len;
  out.inconsistency_bias = s.inconsistency_bias;
  return out;
}

ttc::adapt::AdaptConfig to_config(const ttc_adapt_config& c) {
  ttc::adapt::AdaptConfig out;
  out.mode = c.mode == TTC_ADAPT_CONSTANT ? ttc::adapt::Mode::Constant : ttc::adapt::Mode::Adaptive;
  out.steps = c.steps;
  out.max_steps = c.max_steps;
  out.lr = c.lr;
  out.weights = {c.alpha, c.beta};
  out.max_len = c.max_len;
  out.cluster.tau = c.tau;
  out.freeze_pseudo_label = c.freeze_pseudo_label != 0;
  return out;
}

ttc::harness::ExperimentOptions to_options(const ttc_run_options* o) {
  ttc::harness::ExperimentOptions out;
  if (!o) return out;
  if (o->provider) out.provider = o->provider;
  out.threads = o->threads ? o->threads : 1;
  out.carry_over = o->carry_over != 0;
  return out;
}

}  // namespace

extern "C" {

const char* ttc_version(void) { return "0.1.0"; }

const char* ttc_status_name(ttc_status status) {
  switch (status) {
    case TTC_OK: return "ok";
    case TTC_ERR_CONFIG: return "config";
    case TTC_ERR_USAGE: return "usage";
    case TTC_ERR_PARSE: return "parse";
    case TTC_ERR_IO: return "io";
    case TTC_ERR_VOCABULARY: return "vocabulary";
    case TTC_ERR_SHAPE: return "shape";
    case TTC_ERR_EMPTY_GROUP: return "empty_group";
    case TTC_ERR_NUMERIC: return "numeric";
    case TTC_ERR_DEGENERATE: return "degenerate";
    case TTC_ERR_CONTRACT: return "contract";
    case TTC_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ttc_last_error(void) { return g_last_error.c_str(); }

void ttc_string_free(char* text) { std::free(text); }

void ttc_dataset_spec_init(ttc_dataset_spec* spec) {
  if (!spec) return;
  const ttc::harness::DatasetSpec d;
  *spec = ttc_dataset_spec{d.seed,   d.n_groups, d.K,        ttc::model::to_string(d.task_kind),
                           d.vocab,  d.hidden,   d.embed,    d.features,
                           d.max_len, d.inconsistency_bias};
}

void ttc_adapt_config_init(ttc_adapt_config* cfg) {
  if (!cfg) return;
  const ttc::adapt::AdaptConfig d = ttc::harness::toy_adapt_defaults();
  *cfg = ttc_adapt_config{TTC_ADAPT_ADAPTIVE, d.steps,   d.max_steps,       d.lr, d.weights.alpha,
                          d.weights.beta,     d.max_len, d.cluster.tau, d.freeze_pseudo_label ? 1 : 0};
}

void ttc_run_options_init(ttc_run_options* options) {
  if (!options) return;
  *options = ttc_run_options{TTC_MODE_BASE | TTC_MODE_CONSTANT | TTC_MODE_ADAPTIVE, "token_set", 1, 0};
}

ttc_status ttc_dataset_generate(const ttc_dataset_spec* spec, ttc_dataset** out) {
  TTC_REQUIRE(spec && out, "ttc_dataset_generate: null argument");
  return guarded([&] {
    *out = new ttc_dataset{ttc::harness::generate_dataset(to_spec(*spec))};
    return TTC_OK;
  });
}

ttc_status ttc_dataset_load(const char* path, ttc_dataset** out) {
  TTC_REQUIRE(path && out, "ttc_dataset_load: null argument");
  return guarded([&] {
    *out = new ttc_dataset{ttc::harness::load_dataset(path)};
    return TTC_OK;
  });
}

ttc_status ttc_dataset_parse(const char* text, size_t length, ttc_dataset** out) {
  TTC_REQUIRE(text && out, "ttc_dataset_parse: null argument");
  return guarded([&] {
    std::istringstream in(std::string(text, length));
    *out = new ttc_dataset{ttc::harness::read_dataset(in)};
    return TTC_OK;
  });
}

ttc_status ttc_dataset_save(const ttc_dataset* dataset, const char* path) {
  TTC_REQUIRE(dataset && path, "ttc_dataset_save: null argument");
  return guarded([&] {
    ttc::harness::save_dataset(dataset->value, path);
    return TTC_OK;
  });
}

ttc_status ttc_dataset_serialize(const ttc_dataset* dataset, char** out_text) {
  TTC_REQUIRE(dataset && out_text, "ttc_dataset_serialize: null argument");
  return guarded([&] {
    std::ostringstream out;
    ttc::harness::write_dataset(dataset->value, out);
    *out_text = copy_string(out.str());
    return TTC_OK;
  });
}

size_t ttc_dataset_group_count(const ttc_dataset* dataset) { return dataset ? dataset->value.groups.size() : 0; }

size_t ttc_dataset_certified_count(const ttc_dataset* dataset) {
  if (!dataset) return 0;
  size_t n = 0;
  for (const auto& g : dataset->value.groups) n += g.certified ? 1 : 0;
  return n;
}

void ttc_dataset_free(ttc_dataset* dataset) { delete dataset; }

ttc_status ttc_run(const ttc_dataset* dataset, const ttc_adapt_config* cfg, const ttc_run_options* options,
                   ttc_report** out) {
  TTC_REQUIRE(dataset && cfg && out, "ttc_run: null argument");
  return guarded([&] {
    const unsigned mask = options ? options->modes : (TTC_MODE_BASE | TTC_MODE_CONSTANT | TTC_MODE_ADAPTIVE);
    std::vector<ttc::harness::RunMode> modes;
    if (mask & TTC_MODE_BASE) modes.push_back(ttc::harness::RunMode::Base);
    if (mask & TTC_MODE_CONSTANT) modes.push_back(ttc::harness::RunMode::Constant);
    if (mask & TTC_MODE_ADAPTIVE) modes.push_back(ttc::harness::RunMode::Adaptive);
    if (modes.empty()) return set_error(TTC_ERR_USAGE, "ttc_run: no modes selected");
    *out = new ttc_report{ttc::harness::run_experiment(dataset->value, to_config(*cfg), modes, to_options(options))};
    return TTC_OK;
  });
}

ttc_status ttc_report_parse(const char* text, size_t length, ttc_report** out) {
  TTC_REQUIRE(text && out, "ttc_report_parse: null argument");
  return guarded([&] {
    *out = new ttc_report{ttc::harness::report_from_json(std::string(text, length))};
    return TTC_OK;
  });
}

ttc_status ttc_report_serialize(const ttc_report* report, int with_timing, char** out_text) {
  TTC_REQUIRE(report && out_text, "ttc_report_serialize: null argument");
  return guarded([&] {
    *out_text = copy_string(ttc::harness::report_to_json(report->value, with_timing != 0));
    return TTC_OK;
  });
}

ttc_status ttc_report_summary(const ttc_report* report, char** out_text) {
  TTC_REQUIRE(report && out_text, "ttc_report_summary: null argument");
  return guarded([&] {
    *out_text = copy_string(ttc::harness::report_summary(report->value));
    return TTC_OK;
  });
}

ttc_status ttc_report_csv(const ttc_report* report, char** out_text) {
  TTC_REQUIRE(report && out_text, "ttc_report_csv: null argument");
  return guarded([&] {
    *out_text = copy_string(ttc::harness::report_csv(report->value));
    return TTC_OK;
  });
}

ttc_status ttc_report_aggregate(const ttc_report* report, const char* mode, ttc_metrics* out) {
  TTC_REQUIRE(report && mode && out, "ttc_report_aggregate: null argument");
  return guarded([&] {
    const auto wanted = ttc::harness::parse_run_mode(mode);
    for (const auto& r : report->value.modes) {
      if (r.mode != wanted) continue;
      const auto& m = r.aggregate;
      *out = ttc_metrics{m.acc, m.s_gt, m.con, m.s_c, m.o_all, m.n_pairs};
      return TTC_OK;
    }
    return set_error(TTC_ERR_USAGE, std::string("report has no mode '") + mode + "'");
  });
}

void ttc_report_free(ttc_report* report) { delete report; }

ttc_status ttc_ablate(const ttc_dataset* dataset, const ttc_adapt_config* cfg, const ttc_run_options* options,
                      const char* axis, char** out_csv, size_t* out_rows) {
  TTC_REQUIRE(dataset && cfg && axis && out_csv, "ttc_ablate: null argument");
  return guarded([&] {
    const auto table = ttc::harness::run_ablation(dataset->value, to_config(*cfg),
                                                  ttc::harness::parse_ablation_axis(axis), to_options(options));
    *out_csv = copy_string(ttc::harness::ablation_csv(table));
    if (out_rows) *out_rows = table.rows.size();
    return TTC_OK;
  });
}

ttc_status ttc_gradcheck(uint64_t seed, size_t configurations, ttc_gradcheck_result* out) {
  TTC_REQUIRE(out, "ttc_gradcheck: null argument");
  return guarded([&] {
    ttc::harness::GradcheckOptions opts;
    opts.seed = seed;
    opts.configurations = configurations;
    const auto s = ttc::harness::run_gradcheck(opts);
    *out = ttc_gradcheck_result{s.configurations, s.entries, s.failures, s.max_abs_error, s.max_rel_error};
    if (!s.passed()) return set_error(TTC_ERR_CONTRACT, "gradient check failed: " + s.worst);
    return TTC_OK;
  });
}

ttc_status ttc_levenshtein(const char* a, const char* b, size_t* out) {
  TTC_REQUIRE(a && b && out, "ttc_levenshtein: null argument");
  return guarded([&] {
    *out = ttc::textsim::levenshtein(a, b);
    return TTC_OK;
  });
}

ttc_status ttc_token_set_similarity(const char* a, const char* b, double* out) {
  TTC_REQUIRE(a && b && out, "ttc_token_set_similarity: null argument");
  return guarded([&] {
    *out = ttc::textsim::token_set_similarity(a, b);
    return TTC_OK;
  });
}

}  // extern "C"
