#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ttc/error.hpp"
#include "ttc/rng.hpp"
#include "ttc/toymodel.hpp"

using namespace ttc;
using namespace ttc::model;

namespace {

Variant random_variant(std::mt19937_64& gen, std::size_t F, std::size_t V, std::size_t q_len) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<TokenId> tok(2, static_cast<TokenId>(V - 1));
  Variant v;
  for (std::size_t f = 0; f < F; ++f) v.features.push_back(u(gen));
  for (std::size_t i = 0; i < q_len; ++i) v.question.push_back(tok(gen));
  return v;
}

}  // namespace

TEST_CASE("rng is reproducible and tag separated") {
  Rng a(42, "x"), b(42, "x"), c(42, "y");
  for (int i = 0; i < 10; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  Rng r(1, "range");
  for (int i = 0; i < 1000; ++i) {
    const double x = r.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(r.below(7) < 7);
  }
}

TEST_CASE("synthetic vocabulary") {
  const auto vocab = Vocabulary::synthetic(64);
  CHECK(vocab.size() == 64);
  CHECK(vocab.token(Vocabulary::kBos) == "<bos>");
  CHECK(vocab.token(Vocabulary::kEos) == "<eos>");
  for (TokenId id = 2; id < 64; ++id) {
    CHECK(vocab.id(vocab.token(id)) == id);
  }
  const std::vector<TokenId> ids{5, 9, 5};
  CHECK(vocab.encode(vocab.decode(ids)) == ids);
  CHECK_THROWS_AS(vocab.id("nope"), Error);
  CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>", "Bad"}), Error);
  CHECK_THROWS_AS(Vocabulary({"<bos>", "<eos>", "a", "a"}), Error);
}

TEST_CASE("backbone construction is deterministic and contractive") {
  const auto a = build_backbone(1, 16, 4, 8, 5);
  const auto b = build_backbone(1, 16, 4, 8, 5);
  const auto c = build_backbone(2, 16, 4, 8, 5);
  CHECK(a.params().embed == b.params().embed);
  CHECK(a.params().recur == b.params().recur);
  CHECK(a.params().feat_proj == b.params().feat_proj);
  CHECK(a.params().in_proj == b.params().in_proj);
  CHECK(a.params().bias == b.params().bias);
  CHECK(a.params().recur != c.params().recur);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto bb = build_backbone(seed, 10, 3, 12, 4);
    const auto& r = bb.params().recur;
    for (std::size_t i = 0; i < r.rows; ++i) {
      double sum = 0.0;
      for (double x : r.row(i)) sum += std::abs(x);
      CHECK(sum <= 0.9 + 1e-12);
    }
    for (double x : bb.params().embed.data) {
      CHECK(std::abs(x) <= 0.5);
    }
  }
}

TEST_CASE("initial state of a zero backbone is tanh(bias)") {
  BackboneParams p;
  p.embed = Matrix(4, 2);
  p.feat_proj = Matrix(3, 2);
  p.recur = Matrix(3, 3);
  p.in_proj = Matrix(3, 2);
  p.bias = {0.3, -1.2, 0.0};
  const FrozenBackbone bb(p);
  const auto h = hidden_states(bb, Variant{{0.0, 0.0}, {}}, {});
  REQUIRE(h.size() == 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(h[0][i] == std::tanh(p.bias[i]));
}

TEST_CASE("hidden states match a straight-line recurrence") {
  std::mt19937_64 gen(9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t V = 7, E = 3, H = 5, F = 4;
    const auto bb = build_backbone(seed, V, E, H, F);
    const auto& p = bb.params();
    const auto variant = random_variant(gen, F, V, 1 + seed % 4);
    const std::vector<TokenId> prefix{2, 6, 3};

    // h_0 = tanh(b + W_f x + W_in q), q the decay-weighted question mean
    // with the newest word weighted highest.
    std::vector<double> q(E, 0.0);
    double total = 0.0;
    const std::size_t n = variant.question.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double w = std::pow(0.7, static_cast<double>(n - 1 - i));
      for (std::size_t e = 0; e < E; ++e) q[e] += w * p.embed(variant.question[i], e);
      total += w;
    }
    for (auto& x : q) x /= total;
    const auto wf = oracle::matvec(p.feat_proj.data, H, F, variant.features);
    const auto wq = oracle::matvec(p.in_proj.data, H, E, q);
    std::vector<std::vector<double>> expected(1, std::vector<double>(H));
    for (std::size_t i = 0; i < H; ++i) expected[0][i] = std::tanh(p.bias[i] + wf[i] + wq[i]);
    for (TokenId t : prefix) {
      const std::vector<double> emb(p.embed.data.begin() + t * E, p.embed.data.begin() + (t + 1) * E);
      const auto wr = oracle::matvec(p.recur.data, H, H, expected.back());
      const auto we = oracle::matvec(p.in_proj.data, H, E, emb);
      std::vector<double> next(H);
      for (std::size_t i = 0; i < H; ++i) next[i] = std::tanh(p.bias[i] + wr[i] + we[i]);
      expected.push_back(next);
    }

    const auto got = hidden_states(bb, variant, prefix);
    REQUIRE(got.size() == expected.size());
    for (std::size_t s = 0; s < got.size(); ++s)
      for (std::size_t i = 0; i < H; ++i) CHECK(got[s][i] == doctest::Approx(expected[s][i]).epsilon(1e-12));
    CHECK(hidden_states(bb, variant, prefix) == got);
  }
}

TEST_CASE("question encoding is order sensitive but alias blind") {
  std::vector<TokenId> alias{0, 1, 2, 3, 2, 5};  // token 4 shares token 2's row
  const auto bb = build_backbone(3, 6, 3, 4, 2, alias);
  const Variant a{{0.1, 0.2}, {2, 3, 5}};
  const Variant b{{0.1, 0.2}, {4, 3, 5}};
  const Variant c{{0.1, 0.2}, {3, 2, 5}};
  CHECK(bb.initial_state(a) == bb.initial_state(b));
  CHECK(bb.initial_state(a) != bb.initial_state(c));
}

TEST_CASE("backbone rejects malformed variants") {
  const auto bb = build_backbone(1, 6, 2, 3, 2);
  CHECK_THROWS_AS(bb.initial_state(Variant{{0.0}, {}}), Error);
  CHECK_THROWS_AS(bb.initial_state(Variant{{0.0, NAN}, {}}), Error);
  CHECK_THROWS_AS(bb.initial_state(Variant{{0.0, 0.0}, {9}}), Error);
}

TEST_CASE("logits") {
  LMHead zero{Matrix(4, 3), Vec(4, 0.0)};
  CHECK(logits(zero, Vec{1.0, 2.0, 3.0}) == Vec(4, 0.0));
  LMHead bias_only{Matrix(4, 3), Vec{1.0, -2.0, 0.5, 3.0}};
  CHECK(logits(bias_only, Vec{1.0, 2.0, 3.0}) == bias_only.bias);

  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto head = init_head(trial, 9, 6, 3.0, 0.0);
    Vec h(6);
    for (auto& x : h) x = u(gen);
    const auto want = oracle::matvec(head.weight.data, 9, 6, h);
    const auto got = logits(head, h);
    for (std::size_t v = 0; v < 9; ++v) CHECK(got[v] == doctest::Approx(want[v] + head.bias[v]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(logits(zero, Vec{1.0}), Error);
}

TEST_CASE("init_head scaling leaves greedy decisions unchanged") {
  const auto a = init_head(5, 8, 4, 1.0, 1.25);
  const auto b = init_head(5, 8, 4, 0.1, 1.25);
  for (std::size_t i = 0; i < a.weight.data.size(); ++i) CHECK(b.weight.data[i] == doctest::Approx(0.1 * a.weight.data[i]));
  for (std::size_t i = 0; i < a.bias.size(); ++i) CHECK(b.bias[i] == doctest::Approx(0.1 * a.bias[i]));
}

TEST_CASE("greedy decoding stops immediately when EOS dominates") {
  const auto bb = build_backbone(1, 6, 2, 3, 2);
  auto head = init_head(1, 6, 3, 1.0, 0.0);
  head.bias[Vocabulary::kEos] = 1e6;
  const auto d = greedy_decode(bb, head, Variant{{0.5, -0.5}, {}}, 8);
  CHECK(d.tokens.empty());
  CHECK(d.length() == 0);
  CHECK_THROWS_AS(mean_logits(d), Error);
}

TEST_CASE("greedy decoding never emits BOS and breaks ties toward small ids") {
  const auto bb = build_backbone(1, 5, 2, 3, 2);
  LMHead head{Matrix(5, 3), Vec{100.0, 0.0, 0.0, 0.0, 0.0}};
  // BOS has the largest logit, and EOS ties with every content token.
  CHECK(greedy_decode(bb, head, Variant{{0.0, 0.0}, {}}, 4).tokens.empty());
  head.bias = {100.0, 0.0, 1.0, 1.0, 0.5};
  const auto d = greedy_decode(bb, head, Variant{{0.0, 0.0}, {}}, 3);
  CHECK(d.tokens == std::vector<TokenId>{2, 2, 2});
}

TEST_CASE("crafted head decodes one token then EOS") {
  const auto bb = build_backbone(11, 4, 2, 3, 2);
  const Variant v{{0.4, -0.3}, {}};
  const auto h0 = bb.initial_state(v);
  const auto h1 = bb.advance(h0, 2);
  // Token 2 scores d.(h - mid) and EOS the negative, with d = h0 - h1 and
  // mid the midpoint, so token 2 wins at h0 by |d|^2 and EOS wins at h1.
  LMHead head{Matrix(4, 3), Vec(4, 0.0)};
  double offset = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    const double dj = h0[j] - h1[j];
    head.weight(2, j) = dj;
    head.weight(Vocabulary::kEos, j) = -dj;
    offset += dj * 0.5 * (h0[j] + h1[j]);
  }
  head.bias[2] = -offset;
  head.bias[Vocabulary::kEos] = offset;
  const auto d = greedy_decode(bb, head, v, 5);
  CHECK(d.tokens == std::vector<TokenId>{2});

  // Enumerate every EOS-terminated sequence of at most two content tokens
  // and keep those where each choice is the argmax at its state.
  const auto argmax_non_bos = [&](const Vec& h) {
    const auto z = oracle::matvec(head.weight.data, 4, 3, h);
    TokenId best = 1;
    for (TokenId t = 2; t < 4; ++t) {
      if (z[t] + head.bias[t] > z[best] + head.bias[best]) best = t;
    }
    return best;
  };
  std::vector<std::vector<TokenId>> consistent;
  std::vector<std::vector<TokenId>> candidates{{}};
  for (TokenId a = 2; a < 4; ++a) {
    candidates.push_back({a});
    for (TokenId b = 2; b < 4; ++b) candidates.push_back({a, b});
  }
  for (const auto& seq : candidates) {
    Vec h = h0;
    bool ok = true;
    for (TokenId t : seq) {
      ok = ok && argmax_non_bos(h) == t;
      h = bb.advance(h, t);
    }
    if (ok && argmax_non_bos(h) == Vocabulary::kEos) consistent.push_back(seq);
  }
  CHECK(consistent == std::vector<std::vector<TokenId>>{{2}});

  CHECK(greedy_decode(bb, head, v, 5) == d);
  REQUIRE(d.hidden.size() == 1);
  CHECK(d.hidden[0] == h0);
}

TEST_CASE("mean logits") {
  DecodeResult one;
  one.step_logits = {{1.0, 2.0, -3.0}};
  CHECK(mean_logits(one) == one.step_logits[0]);
  DecodeResult two;
  two.step_logits = {{1.0, -2.0}, {-1.0, 2.0}};
  CHECK(mean_logits(two) == Vec{0.0, 0.0});
  DecodeResult three;
  three.step_logits = {{0.3, 1.1, -2.0}, {4.0, 0.2, 0.0}, {-1.5, 0.9, 7.25}};
  const auto m = mean_logits(three);
  for (std::size_t v = 0; v < 3; ++v) {
    const double want = (three.step_logits[0][v] + three.step_logits[1][v] + three.step_logits[2][v]) / 3.0;
    CHECK(m[v] == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("softmax") {
  const auto u = softmax(Vec{2.0, 2.0, 2.0, 2.0});
  for (double p : u) CHECK(p == doctest::Approx(0.25));
  const auto p = softmax(Vec{std::log(1.0), std::log(2.0), std::log(3.0)});
  CHECK(p[0] == doctest::Approx(1.0 / 6.0));
  CHECK(p[1] == doctest::Approx(2.0 / 6.0));
  CHECK(p[2] == doctest::Approx(3.0 / 6.0));
  const Vec z{0.5, -1.0, 3.0};
  const auto shifted = softmax(Vec{100.5, 99.0, 103.0});
  const auto base = softmax(z);
  for (std::size_t i = 0; i < 3; ++i) CHECK(shifted[i] == doctest::Approx(base[i]).epsilon(1e-14));
  const auto big = softmax(Vec{1000.0, 0.0});
  CHECK(big[0] == 1.0);
  CHECK_THROWS_AS(softmax(Vec{1.0, INFINITY}), Error);
}
