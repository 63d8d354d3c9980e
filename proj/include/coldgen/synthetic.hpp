#pragma once

#include <cstdint>
#include <map>
#include <set>

#include <nlohmann/json_fwd.hpp>

#include "coldgen/corpus.hpp"

namespace coldgen {

struct SynthConfig {
  int n_users = 2000;
  int n_items = 1000;
  /// Number of latent item clusters.
  int latent_dim = 20;
  int min_interactions = 10;
  int max_interactions = 30;
  /// Probability that a title word or category comes from the item's
  /// cluster-specific pool rather than the shared pool.
  double content_signal = 0.8;
  double cold_item_fraction = 0.05;
  int title_vocab_size = 400;
  /// Weight of the user's cluster preference in the item affinity.
  double preference_strength = 4.0;
  /// Standard deviation of the per-item popularity term.
  double popularity_spread = 0.5;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& config);
nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SynthCorpus {
  InteractionLog log;
  ItemCatalog catalog;
  /// Ground-truth latent cluster of every item.
  std::map<ItemId, int> cluster;
  /// Items that may only occur in the last part of the timeline.
  std::set<ItemId> late_items;
};

/// Latent-cluster interaction simulator. Late items become eligible only
/// after 91% of the events, so they debut after the 90% timestamp.
SynthCorpus generate_synthetic(const SynthConfig& config);

}  // namespace coldgen
