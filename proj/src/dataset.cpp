#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ttc/error.hpp"
#include "ttc/harness.hpp"
#include "ttc/rng.hpp"

namespace ttc::harness {

using nlohmann::json;
using model::Variant;
using model::Vec;

namespace {

constexpr std::string_view kFormat = "ttc-dataset";
constexpr int kFormatVersion = 1;

std::string group_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "g%05zu", index);
  return buf;
}

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng, std::size_t from = 0) {
  for (std::size_t i = items.size(); i > from + 1; --i) {
    const std::size_t j = from + rng.below(i - from);
    std::swap(items[i - 1], items[j]);
  }
}

// Canonical input of one group: fixed across certification attempts.
struct CanonicalInput {
  Vec features;
  std::vector<TokenId> question;
};

CanonicalInput draw_canonical(const DatasetSpec& spec, const ToyModel& m, std::size_t index) {
  Rng rng(spec.seed, "dataset.canonical/" + std::to_string(index));
  CanonicalInput c;
  c.features.resize(spec.features);
  for (auto& x : c.features) x = rng.uniform(-1.0, 1.0);

  // Questions draw from content words that own their embedding row.
  std::vector<TokenId> pool;
  for (TokenId v = 2; v < spec.vocab; ++v) {
    if (m.backbone.params().row_alias[v] == v) pool.push_back(v);
  }
  shuffle(pool, rng);
  pool.resize(std::min(pool.size(), kQuestionLength));
  c.question = std::move(pool);
  return c;
}

std::vector<Variant> perturb(const DatasetSpec& spec, const ToyModel& m, const CanonicalInput& c,
                             std::size_t index, std::size_t attempt) {
  Rng rng(spec.seed, "dataset.perturb/" + std::to_string(index) + "/" + std::to_string(attempt));
  const double bias = spec.inconsistency_bias;
  std::vector<Variant> variants(spec.K, Variant{c.features, c.question});

  switch (spec.task_kind) {
    case TaskKind::Rephrase: {
      std::map<TokenId, TokenId> partner;
      for (auto [a, b] : m.synonyms) {
        partner[a] = b;
        partner[b] = a;
      }
      for (auto& v : variants) {
        for (std::size_t i = 1; i < v.question.size(); ++i) {
          auto it = partner.find(v.question[i]);
          if (it != partner.end() && rng.bernoulli(bias)) v.question[i] = it->second;
        }
        if (rng.bernoulli(bias)) shuffle(v.question, rng, 1);
      }
      break;
    }
    case TaskKind::Restyle: {
      const double amplitude = bias * kRestyleNoise;
      for (auto& v : variants) {
        for (auto& x : v.features) x += amplitude * rng.uniform(-1.0, 1.0);
      }
      break;
    }
    case TaskKind::Mask: {
      const std::size_t F = spec.features;
      const auto block = static_cast<std::size_t>(std::lround(bias * static_cast<double>(F) / 2.0));
      if (block == 0) break;
      std::vector<std::size_t> starts(F - block + 1);
      for (std::size_t s = 0; s < starts.size(); ++s) starts[s] = s;
      shuffle(starts, rng);
      for (std::size_t k = 0; k < variants.size(); ++k) {
        const std::size_t start = starts[k % starts.size()];
        for (std::size_t f = start; f < start + block; ++f) variants[k].features[f] = 0.0;
      }
      break;
    }
  }
  return variants;
}

void validate_group(const VariantGroup& g, const DatasetSpec& spec, const model::Vocabulary& vocab) {
  if (g.group_id.empty()) fail(ErrorKind::Parse, "group_id is empty");
  if (g.variants.size() < 2) fail(ErrorKind::Parse, "group needs at least two variants");
  for (const auto& v : g.variants) {
    if (v.features.size() != spec.features) {
      fail(ErrorKind::Parse, "variant has " + std::to_string(v.features.size()) + " features, expected " +
                                 std::to_string(spec.features));
    }
    for (double x : v.features) {
      if (!std::isfinite(x)) fail(ErrorKind::Parse, "variant features must be finite");
    }
    for (TokenId t : v.question) {
      if (t >= vocab.size()) fail(ErrorKind::Parse, "question token outside the vocabulary");
    }
  }
  vocab.encode(g.reference);
}

json spec_to_json(const DatasetSpec& s) {
  return json{{"seed", s.seed},
              {"n_groups", s.n_groups},
              {"K", s.K},
              {"task_kind", model::to_string(s.task_kind)},
              {"vocab", s.vocab},
              {"hidden", s.hidden},
              {"embed", s.embed},
              {"features", s.features},
              {"max_len", s.max_len},
              {"inconsistency_bias", s.inconsistency_bias}};
}

DatasetSpec spec_from_json(const json& j) {
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

}  // namespace

void DatasetSpec::validate() const {
  if (n_groups == 0) fail(ErrorKind::Config, "n_groups must be positive");
  if (K < 2) fail(ErrorKind::Config, "K must be at least 2");
  if (vocab < 3) fail(ErrorKind::Config, "vocab must be at least 3");
  if (hidden == 0 || embed == 0 || features == 0 || max_len == 0) {
    fail(ErrorKind::Config, "model dimensions must be positive");
  }
  if (!(inconsistency_bias >= 0.0 && inconsistency_bias <= 1.0)) {
    fail(ErrorKind::Config, "inconsistency_bias must lie in [0, 1]");
  }
}

ToyModel build_model(const DatasetSpec& spec) {
  spec.validate();
  auto vocab = model::Vocabulary::synthetic(spec.vocab);

  // One synonym pair per eight content words.
  Rng rng(spec.seed, "model.synonyms");
  std::vector<TokenId> content;
  for (TokenId v = 2; v < spec.vocab; ++v) content.push_back(v);
  shuffle(content, rng);
  const std::size_t n_pairs = content.size() / 8;
  std::vector<std::pair<TokenId, TokenId>> synonyms;
  std::vector<TokenId> alias(spec.vocab);
  for (TokenId v = 0; v < spec.vocab; ++v) alias[v] = v;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const TokenId canonical = content[2 * i], other = content[2 * i + 1];
    synonyms.emplace_back(canonical, other);
    alias[other] = canonical;
  }
  std::sort(synonyms.begin(), synonyms.end());

  auto backbone =
      model::build_backbone(spec.seed, spec.vocab, spec.embed, spec.hidden, spec.features, std::move(alias));
  auto head = model::init_head(spec.seed, spec.vocab, spec.hidden, kHeadScale, kEosOffset);
  return ToyModel{std::move(vocab), std::move(backbone), std::move(head), std::move(synonyms)};
}

adapt::AdaptConfig toy_adapt_defaults() {
  adapt::AdaptConfig cfg;
  cfg.lr *= kToyLrScale;
  return cfg;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  const ToyModel m = build_model(spec);
  Dataset ds{spec, {}};
  ds.groups.reserve(spec.n_groups);

  for (std::size_t g = 0; g < spec.n_groups; ++g) {
    const auto canonical = draw_canonical(spec, m, g);
    const auto reference = model::greedy_decode(m.backbone, m.base_head,
                                                Variant{canonical.features, canonical.question}, spec.max_len);
    VariantGroup group;
    group.group_id = group_id_for(g);
    group.task_kind = spec.task_kind;
    group.reference = m.vocab.decode(reference.tokens);

    for (std::size_t attempt = 0; attempt < kCertifyAttempts; ++attempt) {
      group.variants = perturb(spec, m, canonical, g, attempt);
      std::set<std::vector<TokenId>> distinct;
      for (const auto& v : group.variants) {
        distinct.insert(model::greedy_decode(m.backbone, m.base_head, v, spec.max_len).tokens);
      }
      group.certified = distinct.size() >= 2;
      // A zero bias cannot perturb anything; redrawing is pointless.
      if (group.certified || spec.inconsistency_bias == 0.0) break;
    }
    ds.groups.push_back(std::move(group));
  }
  return ds;
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  const auto vocab = model::Vocabulary::synthetic(dataset.spec.vocab);
  out << json{{"format", kFormat}, {"version", kFormatVersion}, {"spec", spec_to_json(dataset.spec)}}.dump()
      << '\n';
  for (const auto& g : dataset.groups) {
    json variants = json::array();
    for (const auto& v : g.variants) {
      json words = json::array();
      for (TokenId t : v.question) words.push_back(vocab.token(t));
      variants.push_back(json{{"features", v.features}, {"question", words}});
    }
    json reference = json::array();
    for (TokenId t : vocab.encode(g.reference)) reference.push_back(vocab.token(t));
    json rec{{"group_id", g.group_id},
             {"task_kind", model::to_string(g.task_kind)},
             {"certified", g.certified},
             {"reference", reference},
             {"variants", variants}};
    out << rec.dump() << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  const auto at_line = [&](const std::string& what) {
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + what);
  };

  Dataset ds;
  std::optional<model::Vocabulary> vocab;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!vocab) {
        if (j.value("format", std::string{}) != kFormat) at_line("missing dataset header");
        if (j.at("version").get<int>() != kFormatVersion) at_line("unsupported dataset version");
        ds.spec = spec_from_json(j.at("spec"));
        ds.spec.validate();
        vocab.emplace(model::Vocabulary::synthetic(ds.spec.vocab));
        continue;
      }
      VariantGroup g;
      g.group_id = j.at("group_id").get<std::string>();
      g.task_kind = model::parse_task_kind(j.at("task_kind").get<std::string>());
      g.certified = j.value("certified", false);
      std::string reference;
      for (const auto& w : j.at("reference")) {
        if (!reference.empty()) reference.push_back(' ');
        reference += w.get<std::string>();
      }
      g.reference = reference;
      for (const auto& jv : j.at("variants")) {
        Variant v;
        v.features = jv.at("features").get<Vec>();
        for (const auto& w : jv.at("question")) v.question.push_back(vocab->id(w.get<std::string>()));
        g.variants.push_back(std::move(v));
      }
      if (g.variants.size() != ds.spec.K) at_line("group has " + std::to_string(g.variants.size()) +
                                                  " variants, header says K=" + std::to_string(ds.spec.K));
      validate_group(g, ds.spec, *vocab);
      if (!seen.insert(g.group_id).second) at_line("duplicate group_id '" + g.group_id + "'");
      ds.groups.push_back(std::move(g));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Parse && std::string_view(e.what()).starts_with("line ")) throw;
      at_line(e.what());
    } catch (const json::exception& e) {
      at_line(e.what());
    }
  }
  if (!vocab) fail(ErrorKind::Parse, "dataset is empty: missing header line");
  if (ds.groups.size() != ds.spec.n_groups) {
    fail(ErrorKind::Parse, "header declares " + std::to_string(ds.spec.n_groups) + " groups, found " +
                               std::to_string(ds.groups.size()));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  write_dataset(dataset, out);
  if (!out) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return read_dataset(in);
}

}  // namespace ttc::harness
