#include "coldgen/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace coldgen {

void validate(const SynthConfig& c) {
  if (c.n_users < 1 || c.n_items < 2) throw ValidationError("n_users and n_items must be positive");
  if (c.latent_dim < 1) throw ValidationError("latent_dim must be positive");
  if (c.min_interactions < 1 || c.max_interactions < c.min_interactions) {
    throw ValidationError("interactions_per_user range must satisfy 1 <= min <= max");
  }
  if (c.max_interactions > c.n_items) throw ValidationError("max_interactions exceeds n_items");
  if (!(c.content_signal >= 0.0 && c.content_signal <= 1.0)) {
    throw ValidationError("content_signal must lie in [0, 1]");
  }
  if (!(c.cold_item_fraction >= 0.0 && c.cold_item_fraction < 1.0)) {
    throw ValidationError("cold_item_fraction must lie in [0, 1)");
  }
  if (c.title_vocab_size < 2 * c.latent_dim + 2) {
    throw ValidationError("title_vocab_size must be at least 2 * latent_dim + 2");
  }
  if (!(c.popularity_spread >= 0.0) || !(c.preference_strength >= 0.0)) {
    throw ValidationError("popularity_spread and preference_strength must be >= 0");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_users", c.n_users},
          {"n_items", c.n_items},
          {"latent_dim", c.latent_dim},
          {"interactions_per_user", {c.min_interactions, c.max_interactions}},
          {"content_signal", c.content_signal},
          {"cold_item_fraction", c.cold_item_fraction},
          {"title_vocab_size", c.title_vocab_size},
          {"preference_strength", c.preference_strength},
          {"popularity_spread", c.popularity_spread},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  try {
    SynthConfig c;
    c.n_users = j.value("n_users", c.n_users);
    c.n_items = j.value("n_items", c.n_items);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    if (j.contains("interactions_per_user")) {
      const auto& r = j.at("interactions_per_user");
      c.min_interactions = r.at(0).get<int>();
      c.max_interactions = r.at(1).get<int>();
    }
    c.content_signal = j.value("content_signal", c.content_signal);
    c.cold_item_fraction = j.value("cold_item_fraction", c.cold_item_fraction);
    c.title_vocab_size = j.value("title_vocab_size", c.title_vocab_size);
    c.preference_strength = j.value("preference_strength", c.preference_strength);
    c.popularity_spread = j.value("popularity_spread", c.popularity_spread);
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid synth config: ") + e.what());
  }
}

namespace {

constexpr double kLateStart = 0.91;
constexpr double kNoveltyBoost = 1.5;
constexpr int kTitleMinWords = 6;
constexpr int kTitleMaxWords = 10;

std::string syllable(int k) {
  static const char kCons[] = "bdfgklmnprstvz";
  static const char kVow[] = "aeiou";
  return {kCons[k / 5], kVow[k % 5]};
}

std::string make_word(int k) {
  std::string w = syllable(k % 70) + syllable((k / 70) % 70);
  if (k >= 4900) w += syllable((k / 4900) % 70) + std::to_string(k / 343000);
  return w;
}

std::string pad_id(char prefix, int i, int n) {
  std::string digits = std::to_string(i);
  std::string width = std::to_string(n - 1);
  return std::string(1, prefix) + std::string(width.size() - std::min(width.size(), digits.size()), '0') + digits;
}

}  // namespace

SynthCorpus generate_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n_clusters = cfg.latent_dim;
  SynthCorpus out;

  std::vector<ItemId> item_ids(cfg.n_items);
  std::vector<int> cluster(cfg.n_items);
  for (int i = 0; i < cfg.n_items; ++i) {
    item_ids[i] = pad_id('i', i, cfg.n_items);
    cluster[i] = std::uniform_int_distribution<int>(0, n_clusters - 1)(rng);
    out.cluster[item_ids[i]] = cluster[i];
  }

  const int shared = cfg.title_vocab_size / 2;
  const int per_cluster = (cfg.title_vocab_size - shared) / n_clusters;
  auto pick_word = [&](int c) {
    if (unif(rng) < cfg.content_signal) {
      return make_word(shared + c * per_cluster + std::uniform_int_distribution<int>(0, per_cluster - 1)(rng));
    }
    return make_word(std::uniform_int_distribution<int>(0, shared - 1)(rng));
  };
  for (int i = 0; i < cfg.n_items; ++i) {
    ItemMeta meta{item_ids[i], "", {}, false};
    const int len = std::uniform_int_distribution<int>(kTitleMinWords, kTitleMaxWords)(rng);
    for (int w = 0; w < len; ++w) {
      std::string word = pick_word(cluster[i]);
      word[0] = static_cast<char>(word[0] - 'a' + 'A');
      meta.title += (w ? " " : "") + word;
    }
    int tag = unif(rng) < cfg.content_signal ? cluster[i]
                                             : std::uniform_int_distribution<int>(0, n_clusters - 1)(rng);
    meta.categories.push_back("grp" + std::to_string(tag));
    out.catalog.emplace(item_ids[i], std::move(meta));
  }

  const int n_late = static_cast<int>(std::lround(cfg.n_items * cfg.cold_item_fraction));
  std::vector<int> perm(cfg.n_items);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 0; i < n_late; ++i) {
    std::swap(perm[i], perm[std::uniform_int_distribution<int>(i, cfg.n_items - 1)(rng)]);
  }
  std::vector<char> late(cfg.n_items, 0);
  for (int i = 0; i < n_late; ++i) {
    late[perm[i]] = 1;
    out.late_items.insert(item_ids[perm[i]]);
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> popularity(cfg.n_items);
  for (auto& q : popularity) q = cfg.popularity_spread * normal(rng);

  // Per-user sampling weights: exp(preference + popularity [+ novelty]).
  std::vector<std::vector<double>> weights(cfg.n_users, std::vector<double>(cfg.n_items));
  std::vector<int> count(cfg.n_users);
  for (int u = 0; u < cfg.n_users; ++u) {
    std::vector<double> pref(n_clusters, 0.0);
    int a = std::uniform_int_distribution<int>(0, n_clusters - 1)(rng);
    if (unif(rng) < 0.5) {
      pref[a] = 1.0;
    } else {
      int b = std::uniform_int_distribution<int>(0, n_clusters - 1)(rng);
      double w = 0.5 + 0.5 * unif(rng);
      pref[a] += w;
      pref[b] += 1.0 - w;
    }
    for (int i = 0; i < cfg.n_items; ++i) {
      weights[u][i] = std::exp(cfg.preference_strength * pref[cluster[i]] + popularity[i] +
                               (late[i] ? kNoveltyBoost : 0.0));
    }
    count[u] = std::uniform_int_distribution<int>(cfg.min_interactions, cfg.max_interactions)(rng);
  }

  struct Event {
    std::int64_t ts;
    int user;
  };
  std::vector<Event> events;
  constexpr std::int64_t kStart = 1600000000;
  constexpr std::int64_t kSpan = 365LL * 24 * 3600;
  std::uniform_int_distribution<std::int64_t> when(0, kSpan - 1);
  for (int u = 0; u < cfg.n_users; ++u) {
    for (int k = 0; k < count[u]; ++k) events.push_back({kStart + when(rng), u});
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });

  const auto late_from = static_cast<std::size_t>(std::ceil(kLateStart * static_cast<double>(events.size())));
  std::vector<std::vector<char>> used(cfg.n_users, std::vector<char>(cfg.n_items, 0));
  std::vector<Interaction> rows;
  rows.reserve(events.size());
  for (std::size_t g = 0; g < events.size(); ++g) {
    const int u = events[g].user;
    const bool late_ok = g >= late_from;
    double total = 0.0;
    for (int i = 0; i < cfg.n_items; ++i) {
      if (!used[u][i] && (late_ok || !late[i])) total += weights[u][i];
    }
    double x = unif(rng) * total;
    int pick = -1;
    for (int i = 0; i < cfg.n_items; ++i) {
      if (used[u][i] || (!late_ok && late[i])) continue;
      pick = i;
      x -= weights[u][i];
      if (x < 0.0) break;
    }
    used[u][pick] = 1;
    rows.push_back({pad_id('u', u, cfg.n_users), item_ids[pick], events[g].ts});
  }
  out.log = InteractionLog(std::move(rows));
  return out;
}

}  // namespace coldgen
