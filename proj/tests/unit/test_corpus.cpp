#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "coldgen/corpus.hpp"
#include "gen.hpp"

using namespace coldgen;

TEST_CASE("three-row file") {
  auto log = parse_interactions("u1\ti1\t5\nu1\ti2\t7\nu2\ti1\t6\n");
  CHECK(log.num_users() == 2);
  CHECK(log.num_items() == 2);
  auto h = build_user_histories(log);
  CHECK(h["u1"] == std::vector<ItemId>{"i1", "i2"});
}

TEST_CASE("equal timestamps keep file order") {
  auto h = build_user_histories(parse_interactions("u1\tb\t5\nu1\ta\t5\nu1\tc\t5\n"));
  CHECK(h["u1"] == std::vector<ItemId>{"b", "a", "c"});
}

TEST_CASE("histories sort by timestamp") {
  auto h = build_user_histories(parse_interactions("u1\ti1\t5\nu1\ti2\t3\n"));
  CHECK(h["u1"] == std::vector<ItemId>{"i2", "i1"});
  CHECK(build_user_histories(parse_interactions("u\ti\t1\n"))["u"].size() == 1);
}

TEST_CASE("malformed rows report their line") {
  try {
    parse_interactions("u1\ti1\t5\nu1\ti1\tfoo\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_interactions("u1\ti1\n"), ParseError);
  CHECK_THROWS_AS(parse_interactions(""), ParseError);
}

TEST_CASE("interactions format round-trips") {
  auto log = parse_interactions("u1\ti1\t5\nu2\ti9\t3\n");
  auto again = parse_interactions(format_interactions(log));
  REQUIRE(again.size() == 2);
  CHECK(again.interactions()[1].timestamp == 3);
  CHECK(again.interactions()[1].item_id == "i9");
}

TEST_CASE("item metadata") {
  auto cat = parse_item_metadata(R"({"item_id":"i1","title":"Red Ball","categories":["toys"]})");
  REQUIRE(cat.size() == 1);
  CHECK(cat["i1"].title == "Red Ball");
  CHECK(cat["i1"].categories == std::vector<std::string>{"toys"});
  CHECK_THROWS_AS(parse_item_metadata("{\"item_id\":\"i1\",\"title\":\"a\"}\n{\"item_id\":\"i1\",\"title\":\"b\"}\n"),
                  ParseError);
  CHECK_THROWS_AS(parse_item_metadata(R"({"item_id":"i1","title":"","categories":[]})"), ParseError);
  CHECK_THROWS_AS(parse_item_metadata("{not json"), ParseError);
  auto again = parse_item_metadata(format_item_metadata(cat));
  CHECK(again["i1"].title == "Red Ball");
}

TEST_CASE("missing metadata is synthesized and flagged") {
  auto log = parse_interactions("u\ti1\t1\nu\ti2\t2\n");
  auto cat = parse_item_metadata(R"({"item_id":"i1","title":"A"})");
  auto added = complete_catalog(cat, log);
  CHECK(added == std::vector<ItemId>{"i2"});
  CHECK(cat["i2"].synthesized);
  CHECK(cat["i2"].title == "i2");
}

TEST_CASE("k-core hand example") {
  auto log = parse_interactions("u1\ti1\t1\nu1\ti2\t2\nu2\ti1\t3\nu2\ti2\t4\nu3\ti1\t5\n");
  auto f = k_core_filter(log, 2);
  CHECK(f.num_users() == 2);
  CHECK(f.num_items() == 2);
  CHECK_FALSE(f.user_index().contains("u3"));
  CHECK(k_core_filter(log, 1).size() == log.size());
}

TEST_CASE("k-core cascade to empty") {
  // Chain u1-i1-u2-i2-u3: every removal exposes the next degree-1 node.
  auto log = parse_interactions("u1\ti1\t1\nu2\ti1\t2\nu2\ti2\t3\nu3\ti2\t4\n");
  auto f = k_core_filter(log, 2);
  CHECK(f.empty());
  CHECK(f.empty_warning);
}

namespace {

// Independent oracle: remove one violating node at a time until none remain.
std::set<std::size_t> core_oracle(const std::vector<Interaction>& rows, int k) {
  std::set<std::size_t> alive;
  for (std::size_t i = 0; i < rows.size(); ++i) alive.insert(i);
  for (bool changed = true; changed;) {
    changed = false;
    std::map<std::string, int> du, di;
    for (auto i : alive) {
      ++du[rows[i].user_id];
      ++di[rows[i].item_id];
    }
    for (auto it = alive.begin(); it != alive.end(); ++it) {
      if (du[rows[*it].user_id] < k || di[rows[*it].item_id] < k) {
        const auto bad_user = du[rows[*it].user_id] < k ? rows[*it].user_id : std::string();
        const auto bad_item = bad_user.empty() ? rows[*it].item_id : std::string();
        std::erase_if(alive, [&](std::size_t j) {
          return (!bad_user.empty() && rows[j].user_id == bad_user) || (!bad_item.empty() && rows[j].item_id == bad_item);
        });
        changed = true;
        break;
      }
    }
  }
  return alive;
}

}  // namespace

TEST_CASE("k-core matches the one-at-a-time oracle and is idempotent and order independent") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::mt19937_64 rng(seed);
    auto rows = testgen::random_rows(rng, 12, 10, 60);
    const int k = 1 + static_cast<int>(seed % 4);
    InteractionLog log(rows);
    auto f = k_core_filter(log, k);
    auto expect = core_oracle(rows, k);
    REQUIRE(f.size() == expect.size());
    std::size_t j = 0;
    for (auto i : expect) {
      CHECK(f.interactions()[j].user_id == rows[i].user_id);
      CHECK(f.interactions()[j].item_id == rows[i].item_id);
      ++j;
    }
    CHECK(k_core_filter(f, k).size() == f.size());
    for (const auto& [u, pos] : f.user_index()) CHECK(pos.size() >= static_cast<std::size_t>(k));
    for (const auto& [i, pos] : f.item_index()) CHECK(pos.size() >= static_cast<std::size_t>(k));

    auto shuffled = rows;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto g = k_core_filter(InteractionLog(shuffled), k);
    CHECK(g.size() == f.size());
    CHECK(g.user_index().size() == f.user_index().size());
    CHECK(g.item_index().size() == f.item_index().size());
  }
}
