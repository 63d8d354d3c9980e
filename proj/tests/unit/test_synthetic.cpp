#include <doctest.h>

#include <vector>

#include <nlohmann/json.hpp>

#include "coldgen/identifiers.hpp"
#include "coldgen/protocol.hpp"
#include "coldgen/synthetic.hpp"

using namespace coldgen;

namespace {

// Mean pairwise cosine of content embeddings within and between clusters.
std::pair<double, double> cluster_cosines(const SynthCorpus& s) {
  std::vector<Vector> emb;
  std::vector<int> cl;
  for (const auto& [id, meta] : s.catalog) {
    emb.push_back(content_embedding(meta, 64, 7).vector);
    cl.push_back(s.cluster.at(id));
  }
  double within = 0.0, between = 0.0;
  long nw = 0, nb = 0;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    for (std::size_t j = i + 1; j < emb.size(); ++j) {
      const double c = emb[i].dot(emb[j]);
      if (cl[i] == cl[j]) {
        within += c;
        ++nw;
      } else {
        between += c;
        ++nb;
      }
    }
  }
  return {within / static_cast<double>(nw), between / static_cast<double>(nb)};
}

}  // namespace

TEST_CASE("fixed seed gives byte-identical files") {
  SynthConfig c{.n_users = 200, .n_items = 120, .latent_dim = 6, .seed = 3};
  auto a = generate_synthetic(c), b = generate_synthetic(c);
  CHECK(format_interactions(a.log) == format_interactions(b.log));
  CHECK(format_item_metadata(a.catalog) == format_item_metadata(b.catalog));
  c.seed = 4;
  CHECK(format_interactions(generate_synthetic(c).log) != format_interactions(a.log));
}

TEST_CASE("config validation and JSON round-trip") {
  CHECK_THROWS_AS(generate_synthetic({.cold_item_fraction = 1.0}), ValidationError);
  CHECK_THROWS_AS(generate_synthetic({.content_signal = 1.5}), ValidationError);
  CHECK_THROWS_AS(generate_synthetic({.n_users = 0}), ValidationError);
  SynthConfig c{.n_users = 17, .content_signal = 0.3, .seed = 9};
  CHECK(to_json(synth_config_from_json(to_json(c))) == to_json(c));
  CHECK_THROWS_AS(synth_config_from_json(nlohmann::json{{"content_signal", "high"}}), ValidationError);
}

TEST_CASE("default benchmark: 40-60 items debut after the 90% timestamp") {
  auto s = generate_synthetic({.cold_item_fraction = 0.05, .seed = 11});
  auto split = chronological_split(s.log, 0.9);
  auto parts = classify_item_cold(s.log, split);
  CHECK(parts.cold.size() >= 40);
  CHECK(parts.cold.size() <= 60);
  for (const auto& item : parts.cold) CHECK(s.late_items.contains(item));
  CHECK(s.log.size() > 30000);
  CHECK(s.log.size() < 50000);
}

TEST_CASE("property: late items never occur before the 90% boundary") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig c{.n_users = 150, .n_items = 100, .latent_dim = 5, .cold_item_fraction = 0.1, .seed = seed};
    auto s = generate_synthetic(c);
    auto split = chronological_split(s.log, 0.9);
    const auto& rows = s.log.interactions();
    for (auto p : split.train) CHECK_FALSE(s.late_items.contains(rows[p].item_id));
  }
}

TEST_CASE("content_signal controls cluster information in titles") {
  auto none = cluster_cosines(generate_synthetic({.content_signal = 0.0, .seed = 5}));
  CHECK(std::abs(none.first - none.second) < 0.05);
  auto strong = cluster_cosines(generate_synthetic({.content_signal = 0.8, .seed = 5}));
  CHECK(strong.first > strong.second + 0.2);
}
