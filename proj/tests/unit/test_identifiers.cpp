#include <doctest.h>

#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "coldgen/identifiers.hpp"
#include "coldgen/synthetic.hpp"

using namespace coldgen;

namespace {

ItemMeta meta(const std::string& id, const std::string& title, std::vector<std::string> cats = {}) {
  return ItemMeta{id, title, std::move(cats), false};
}

ItemCatalog catalog_of(const std::vector<std::pair<std::string, std::string>>& items) {
  ItemCatalog c;
  for (const auto& [id, title] : items) c[id] = meta(id, title);
  return c;
}

void check_injective(const IdentifierMap& m) {
  std::set<std::vector<TokenId>> seen;
  for (const auto& [item, seq] : m.tokens()) {
    CHECK(seen.insert(seq).second);
    CHECK(static_cast<int>(seq.size()) <= m.max_len());
    for (auto t : seq) CHECK(static_cast<std::size_t>(t) < m.vocab_size());
  }
}

Matrix stack(const std::vector<ContentEmbedding>& e) {
  Matrix m(static_cast<Eigen::Index>(e.size()), e[0].vector.size());
  for (std::size_t i = 0; i < e.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = e[i].vector.transpose();
  return m;
}

}  // namespace

TEST_CASE("content embedding is a normalized bag of words") {
  auto a = content_embedding(meta("a", "red ball"), 64, 1);
  auto b = content_embedding(meta("b", "Ball RED"), 64, 1);
  CHECK(a.vector == b.vector);
  CHECK(a.vector.norm() == doctest::Approx(1.0));
  auto e = content_embedding(meta("e", ""), 64, 1);
  CHECK(e.empty);
  CHECK(e.vector.norm() == 0.0);
  CHECK_THROWS_AS(content_embedding(meta("a", "x"), 4, 1), ValidationError);
}

TEST_CASE("disjoint titles are nearly orthogonal") {
  auto a = content_embedding(meta("a", "red ball"), 64, 0).vector;
  auto b = content_embedding(meta("b", "wooden train set"), 64, 0).vector;
  auto c = content_embedding(meta("c", "garden hose nozzle"), 64, 0).vector;
  CHECK(std::abs(a.dot(b)) < 0.5);
  CHECK(std::abs(a.dot(c)) < 0.5);
  CHECK(std::abs(b.dot(c)) < 0.5);
}

TEST_CASE("atomic ids") {
  auto cat = catalog_of({{"a", "x"}, {"b", "y"}, {"c", "z"}});
  auto m = assign_atomic(cat);
  CHECK(m.size() == 3);
  CHECK(m.vocab_size() == 3 + IdentifierMap::kNumReserved);
  check_injective(m);
  extend_atomic(m, {"d"});
  CHECK(m.vocab_size() == 4 + IdentifierMap::kNumReserved);
  CHECK(m.at("d") == std::vector<TokenId>{static_cast<TokenId>(m.vocab_size() - 1)});
}

TEST_CASE("textual ids") {
  auto cat = catalog_of({{"a", "Red Ball"}, {"b", "Blue Ball"}, {"c", "Ball"}, {"d", "ball"}});
  auto m = assign_textual(cat);
  auto da = m.describe("a"), db = m.describe("b");
  CHECK(da == std::vector<std::string>{"red", "ball"});
  CHECK(db == std::vector<std::string>{"blue", "ball"});
  CHECK(m.at("a")[1] == m.at("b")[1]);
  CHECK(m.describe("c") == std::vector<std::string>{"ball", "#1"});
  CHECK(m.describe("d") == std::vector<std::string>{"ball", "#2"});
  check_injective(m);

  std::string long_title;
  for (int i = 0; i < 20; ++i) long_title += "w" + std::to_string(i) + " ";
  auto lc = catalog_of({{"x", long_title}, {"y", long_title + "extra"}});
  auto lm = assign_textual(lc, 16);
  CHECK(lm.describe("x").size() == 17);
  CHECK(lm.describe("x").back() == "#1");
  CHECK(lm.describe("y").back() == "#2");
}

TEST_CASE("cold textual item continues the suffix counter") {
  auto cat = catalog_of({{"a", "Ball"}, {"b", "Ball"}, {"c", "Cup"}});
  auto m = assign_textual(cat, std::vector<ItemId>{"a", "b"});
  extend_textual(m, cat, {"c"});
  cat["z"] = meta("z", "ball");
  extend_textual(m, cat, {"z"});
  CHECK(m.describe("z") == std::vector<std::string>{"ball", "#3"});
  CHECK(m.describe("c") == std::vector<std::string>{"cup"});
}

TEST_CASE("semantic encoding and cold items") {
  auto synth = generate_synthetic({.n_users = 50, .n_items = 120, .latent_dim = 6, .seed = 2});
  std::vector<ContentEmbedding> warm, cold;
  for (const auto& [id, m] : synth.catalog) {
    (synth.late_items.contains(id) ? cold : warm).push_back(content_embedding(m, 32, 5));
  }
  REQUIRE_FALSE(cold.empty());
  const Matrix x = stack(warm);
  for (const auto& cb : {train_rq(x, 3, 8, 1), train_bkm(x, 3, 8, 1), train_opq(x, 4, 8, 1, 3)}) {
    auto map = encode_items(cb, warm);
    check_injective(map);
    const auto before = codebook_digest(cb);
    const auto warm_vocab = map.vocab_size();
    for (const auto& c : cold) {
      const auto& seq = encode_cold_item(map, cb, c);
      const auto base = quantize(cb, c.vector);
      CHECK(seq.size() >= base.size());
      CHECK(seq.size() <= base.size() + 1);
    }
    CHECK(codebook_digest(cb) == before);
    CHECK(map.vocab_size() >= warm_vocab);
    check_injective(map);

    // In-sample reconstruction error is bounded by the worst training point.
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Vector v = x.row(i).transpose();
      worst = std::max(worst, (v - reconstruct(cb, quantize(cb, v))).squaredNorm());
    }
    for (const auto& w : warm) CHECK((w.vector - reconstruct(cb, quantize(cb, w.vector))).squaredNorm() <= worst);
  }
}

TEST_CASE("identical embeddings collide then get suffixes") {
  std::vector<ContentEmbedding> e;
  for (const char* id : {"a", "b", "c"}) e.push_back(content_embedding(meta(id, "same words here"), 16, 0));
  e.push_back(content_embedding(meta("d", "other title"), 16, 0));
  e.push_back(content_embedding(meta("f", "third thing"), 16, 0));
  auto cb = train_rq(stack(e), 1, 3, 0);
  auto m = encode_items(cb, e);
  CHECK(m.describe("a").back() == "#1");
  CHECK(m.describe("b").back() == "#2");
  CHECK(m.describe("c").back() == "#3");
  auto cold = content_embedding(meta("z", "here same words"), 16, 0);
  cold.item_id = "z";
  encode_cold_item(m, cb, cold);
  CHECK(m.describe("z").back() == "#4");
  CHECK(m.describe("z")[0] == m.describe("a")[0]);
}

TEST_CASE("cold item at a centroid uses that centroid's token") {
  std::vector<ContentEmbedding> e;
  for (int i = 0; i < 30; ++i) e.push_back(content_embedding(meta("i" + std::to_string(i), "t" + std::to_string(i) + " common"), 16, 0));
  auto cb = train_rq(stack(e), 2, 4, 0);
  auto m = encode_items(cb, e);
  ContentEmbedding c{"cold", cb.centroids[0].row(2).transpose(), false};
  const auto& seq = encode_cold_item(m, cb, c);
  CHECK(m.vocab()[seq[0]] == "<L0:2>");
}

TEST_CASE("property: injectivity on random catalogs with forced duplicates") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> word(0, 5), len(1, 4);
    ItemCatalog cat;
    for (int i = 0; i < 40; ++i) {
      std::string title;
      for (int k = len(rng); k > 0; --k) title += "w" + std::to_string(word(rng)) + " ";
      const auto id = "i" + std::to_string(i);
      cat[id] = meta(id, title);
    }
    cat["dup1"] = meta("dup1", "w1");
    cat["dup2"] = meta("dup2", "w1");
    check_injective(assign_textual(cat, 3));
    check_injective(assign_atomic(cat));
    std::vector<ContentEmbedding> e;
    for (const auto& [id, m] : cat) e.push_back(content_embedding(m, 16, seed));
    check_injective(encode_items(train_rq(stack(e), 2, 3, seed), e));
    check_injective(encode_items(train_bkm(stack(e), 2, 3, seed), e));
    check_injective(encode_items(train_opq(stack(e), 2, 3, seed, 2), e));
  }
}

TEST_CASE("identifier map JSON round-trip") {
  auto cat = catalog_of({{"a", "Ball"}, {"b", "Ball"}, {"c", "Cup"}});
  auto m = assign_textual(cat);
  auto back = identifier_map_from_json(identifier_map_to_json(m));
  CHECK(back.tokens() == m.tokens());
  CHECK(back.vocab() == m.vocab());
  cat["d"] = meta("d", "ball");
  extend_textual(back, cat, {"d"});
  CHECK(back.describe("d").back() == "#3");
}
