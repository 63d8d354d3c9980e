#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "coldgen/decode.hpp"
#include "coldgen/markov.hpp"
#include "coldgen/recurrent.hpp"
#include "gen.hpp"

using namespace coldgen;

namespace {

constexpr TokenId kBos = IdentifierMap::kBos;
constexpr TokenId kEos = IdentifierMap::kEos;

// Map with explicit sequences over tokens w0..w9.
IdentifierMap hand_map(const std::vector<std::pair<ItemId, std::vector<int>>>& items) {
  IdentifierMap map(Scheme::kTextual, 8);
  for (int w = 0; w < 10; ++w) map.intern("w" + std::to_string(w));
  std::vector<std::pair<ItemId, std::vector<TokenId>>> batch;
  for (const auto& [id, words] : items) {
    std::vector<TokenId> seq;
    for (int w : words) seq.push_back(IdentifierMap::kNumReserved + w);
    batch.emplace_back(id, seq);
  }
  map.assign_batch(batch);
  return map;
}

std::vector<ItemId> ids(const RankedList& r) {
  std::vector<ItemId> out;
  for (const auto& e : r.entries) out.push_back(e.item_id);
  return out;
}

bool same_list(const RankedList& a, const RankedList& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].item_id != b.entries[i].item_id || a.entries[i].logprob != b.entries[i].logprob) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("trie structure and enumeration round-trip") {
  auto map = hand_map({{"a", {0, 1}}, {"b", {0, 2}}, {"c", {3, 4}}});
  IdTrie trie = build_trie(map, {"a", "b", "c"});
  CHECK(trie.num_items() == 3);
  CHECK(trie.num_nodes() <= 7);
  std::size_t terminals = 0;
  for (std::uint32_t i = 0; i < trie.num_nodes(); ++i) terminals += trie.node(i).item.has_value();
  CHECK(terminals == 3);

  std::set<std::pair<ItemId, std::vector<TokenId>>> expected, got;
  for (const auto& id : {"a", "b", "c"}) expected.emplace(id, map.at(id));
  for (auto& p : enumerate(trie)) got.insert(p);
  CHECK(got == expected);

  CHECK_THROWS_AS(build_trie(map, {}), ValidationError);
  CHECK_THROWS_AS(build_trie(map, {"zzz"}), ValidationError);
}

TEST_CASE("trie insertion keeps untouched subtrees") {
  auto map = hand_map({{"a", {0, 1}}, {"b", {0, 2}}, {"c", {3, 4}}, {"d", {3, 5}}});
  IdTrie trie = build_trie(map, {"a", "b", "c"});
  const std::vector<TokenId> left{map.at("a")[0]};
  const std::string before = subtree_digest(trie, left);
  const std::string right_before = subtree_digest(trie, std::vector<TokenId>{map.at("c")[0]});
  insert_items(trie, map, {"d"});
  CHECK(trie.num_items() == 4);
  CHECK(subtree_digest(trie, left) == before);
  CHECK(subtree_digest(trie, std::vector<TokenId>{map.at("c")[0]}) != right_before);
  CHECK(enumerate(trie).size() == 4);

  CHECK_THROWS_AS(trie.insert("other", map.at("a")), ValidationError);
  CHECK_THROWS_AS(insert_items(trie, map, {"a"}), ValidationError);
}

TEST_CASE("resolve") {
  auto map = hand_map({{"a", {0, 1}}, {"b", {0}}});
  IdTrie trie = build_trie(map, {"a"});
  CHECK(resolve(trie, map.at("a")) == std::optional<ItemId>("a"));
  CHECK_FALSE(resolve(trie, std::vector<TokenId>{map.at("a")[0]}).has_value());
  CHECK_FALSE(resolve(trie, std::vector<TokenId>{IdentifierMap::kNumReserved + 9}).has_value());
  insert_items(trie, map, {"b"});
  CHECK(resolve(trie, map.at("b")) == std::optional<ItemId>("b"));
  CHECK(resolve(trie, map.at("a")) == std::optional<ItemId>("a"));
}

TEST_CASE("beam search on a single-item trie") {
  std::mt19937_64 rng(5);
  auto map = hand_map({{"only", {2, 7, 1}}});
  auto model = testgen::random_recurrent(rng, static_cast<int>(map.vocab_size()));
  IdTrie trie = build_trie(map, {"only"});
  auto r = beam_search(model, std::vector<TokenId>{kBos}, trie, 1);
  REQUIRE(r.entries.size() == 1);
  CHECK(r.entries[0].item_id == "only");
  CHECK_FALSE(r.short_list);
}

TEST_CASE("uniform model ranks equal-length codes by item id") {
  auto map = hand_map({{"z", {0, 1}}, {"m", {2, 3}}, {"a", {4, 5}}, {"q", {0, 6}}});
  RecurrentModel uniform(GruParams::zeros(static_cast<int>(map.vocab_size()), 4));
  IdTrie trie = build_trie(map, {"z", "m", "a", "q"});
  auto r = beam_search(uniform, std::vector<TokenId>{kBos}, trie, 4);
  CHECK(ids(r) == std::vector<ItemId>{"a", "m", "q", "z"});
  for (const auto& e : r.entries) CHECK(e.logprob == r.entries[0].logprob);
}

TEST_CASE("short list and argument errors") {
  auto map = hand_map({{"a", {0}}, {"b", {1}}});
  RecurrentModel uniform(GruParams::zeros(static_cast<int>(map.vocab_size()), 4));
  IdTrie trie = build_trie(map, {"a", "b"});
  auto r = beam_search(uniform, std::vector<TokenId>{kBos}, trie, 5);
  CHECK(r.entries.size() == 2);
  CHECK(r.short_list);
  BeamOptions narrow;
  narrow.beam_width = 2;
  CHECK_THROWS_AS(beam_search(uniform, std::vector<TokenId>{kBos}, trie, 3, narrow), ValidationError);
  CHECK_THROWS_AS(beam_search(uniform, std::vector<TokenId>{kBos}, IdTrie{}, 1), ValidationError);
  CHECK_THROWS_AS(rank_items_exhaustive(uniform, std::vector<TokenId>{kBos}, map, {}), ValidationError);
}

TEST_CASE("exhaustive ranking matches hand chain-rule arithmetic") {
  // Order-1 Markov on BOS a b EOS, BOS a c EOS, BOS a b EOS with alpha 0.5.
  const TokenId a = 3, b = 4, c = 5;
  const double alpha = 0.5, v = 6.0;
  auto m = fit_markov({{kBos, a, b, kEos}, {kBos, a, c, kEos}, {kBos, a, b, kEos}}, 6, 1, alpha);
  // Predicted tokens: a x3, b x2, c x1, EOS x3.
  const double n = 9.0;
  auto p0 = [&](double count) { return (count + alpha / v) / (n + alpha); };
  const double pa = (3.0 + alpha * p0(3.0)) / (3.0 + alpha);
  const double pb = (2.0 + alpha * p0(2.0)) / (3.0 + alpha);
  const double pc = (1.0 + alpha * p0(1.0)) / (3.0 + alpha);

  IdentifierMap map(Scheme::kTextual, 4);
  for (const char* w : {"a", "b", "c"}) map.intern(w);
  map.assign_batch({{"x", {a, b}}, {"y", {a, c}}});
  auto r = rank_items_exhaustive(m, std::vector<TokenId>{kBos}, map, {"y", "x"});
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[0].item_id == "x");
  CHECK(r.entries[1].item_id == "y");
  CHECK(r.entries[0].logprob == doctest::Approx(std::log(pa) + std::log(pb)).epsilon(1e-12));
  CHECK(r.entries[1].logprob == doctest::Approx(std::log(pa) + std::log(pc)).epsilon(1e-12));
}

TEST_CASE("property: beam search equals exhaustive ranking for both model families") {
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n_items = std::uniform_int_distribution<int>(1, 50)(rng);
    auto inst = testgen::random_decode_instance(rng, n_items, 8, 4);
    const auto vocab = inst.map.vocab_size();
    auto markov = testgen::random_markov(rng, vocab);
    auto recurrent = testgen::random_recurrent(rng, static_cast<int>(vocab));
    IdTrie trie = build_trie(inst.map, inst.items);
    const int k = std::uniform_int_distribution<int>(1, n_items)(rng);
    BeamOptions opt;
    opt.beam_width = std::max(n_items, k);
    for (const SequenceModel* model : {static_cast<const SequenceModel*>(&markov),
                                       static_cast<const SequenceModel*>(&recurrent)}) {
      auto beam = beam_search(*model, inst.context, trie, k, opt);
      auto full = rank_items_exhaustive(*model, inst.context, inst.map, inst.items);
      full.entries.resize(static_cast<std::size_t>(k));
      mismatches += !same_list(beam, full);
      for (const auto& e : beam.entries) {
        CHECK(trie.contains(e.item_id));
        CHECK(e.logprob == sequence_logprob(*model, inst.context, inst.map.at(e.item_id)));
      }
      for (std::size_t i = 1; i < beam.entries.size(); ++i) {
        const auto& p = beam.entries[i - 1];
        const auto& q = beam.entries[i];
        CHECK((p.logprob > q.logprob || (p.logprob == q.logprob && p.item_id < q.item_id)));
      }
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("adding a candidate keeps the relative order of the others") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = testgen::random_decode_instance(rng, 12, 6, 3);
    auto model = testgen::random_recurrent(rng, static_cast<int>(inst.map.vocab_size()));
    std::vector<ItemId> fewer(inst.items.begin(), inst.items.end() - 1);
    auto small = ids(rank_items_exhaustive(model, inst.context, inst.map, fewer));
    auto big = ids(rank_items_exhaustive(model, inst.context, inst.map, inst.items));
    big.erase(std::find(big.begin(), big.end(), inst.items.back()));
    CHECK(small == big);
  }
}

TEST_CASE("trie-constrained sampling follows renormalized child probabilities") {
  // Order-1 Markov: after BOS, a:b:c counts 2:1:1; items use a and b only.
  const TokenId a = 3, b = 4, c = 5;
  auto m = fit_markov({{kBos, a, kEos}, {kBos, a, kEos}, {kBos, b, kEos}, {kBos, c, kEos}}, 6, 1, 1e-9);
  IdentifierMap map(Scheme::kTextual, 2);
  for (const char* w : {"a", "b", "c"}) map.intern(w);
  map.assign_batch({{"x", {a}}, {"y", {b}}});
  IdTrie trie = build_trie(map, {"x", "y"});
  const auto state = m.start(std::vector<TokenId>{kBos});
  Rng rng(9);
  std::map<ItemId, int> counts;
  const int n = 6000;
  for (int i = 0; i < n; ++i) {
    auto seq = sample_identifier(m, state, trie, rng);
    auto item = resolve(trie, seq);
    REQUIRE(item.has_value());
    ++counts[*item];
  }
  // P(x) = 2/3 after renormalizing over {a, b}; 5 standard deviations.
  const double sd = std::sqrt(n * (2.0 / 3.0) * (1.0 / 3.0));
  CHECK(std::abs(counts["x"] - n * 2.0 / 3.0) < 5.0 * sd);
}

TEST_CASE("sampled identifiers always resolve, including terminal nodes with children") {
  std::mt19937_64 gen(31);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = testgen::random_decode_instance(gen, 20, 4, 3);
    auto model = testgen::random_recurrent(gen, static_cast<int>(inst.map.vocab_size()));
    IdTrie trie = build_trie(inst.map, inst.items);
    const auto state = model.start(inst.context);
    for (int s = 0; s < 20; ++s) CHECK(resolve(trie, sample_identifier(model, state, trie, rng)).has_value());
  }
}

TEST_CASE("ranked list CSV") {
  RankedList r;
  r.entries = {{"a", -0.5}, {"b", -1.25}};
  std::ostringstream out;
  write_ranked_csv(out, 7, r, true);
  CHECK(out.str() == "case_id,rank,item_id,logprob\n7,1,a,-0.5\n7,2,b,-1.25\n");
}
