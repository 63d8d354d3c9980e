#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coldgen/common.hpp"
#include "coldgen/corpus.hpp"

namespace coldgen {

enum class CaseSplit { kValidation, kTest };

namespace tags {
inline constexpr const char* kWarmItem = "warm_item";
inline constexpr const char* kColdItem = "cold_item";
inline constexpr const char* kWarmUser = "warm_user";
inline constexpr const char* kColdUser = "cold_user";
}  // namespace tags

/// One held-out next-item prediction.
struct EvalCase {
  std::size_t case_id = 0;
  UserId user_id;
  std::vector<ItemId> context;
  ItemId target;
  std::int64_t timestamp = 0;
  std::set<std::string> setting_tags;
  CaseSplit split = CaseSplit::kTest;
  /// Some context item is cold; such cold-user cases are left out of the
  /// default user-cold aggregate.
  bool context_has_cold_items = false;

  bool has_tag(const char* tag) const { return setting_tags.contains(tag); }
};

struct ProtocolConfig {
  double train_fraction = 0.9;
  double user_fraction = 0.1;
  double val_fraction_of_holdout = 0.5;
  std::uint64_t seed = 0;
  int cold_context_min = 1;
  int cold_context_max = 10;
  /// 0 = unlimited warm-user context.
  int max_warm_context = 0;
  /// Recorded for provenance: the k-core threshold applied before splitting.
  int k_core = 5;
};

struct SplitManifest {
  std::int64_t boundary_timestamp = 0;
  std::vector<std::size_t> train_interactions;
  std::vector<EvalCase> eval_cases;
  std::set<ItemId> warm_items;
  std::set<ItemId> cold_items;
  std::set<UserId> warm_users;
  std::set<UserId> cold_users;
  std::uint64_t seed = 0;
  double train_fraction = 0.9;
  double user_fraction = 0.1;
  double val_fraction_of_holdout = 0.5;
  int cold_context_min = 1;
  int cold_context_max = 10;
  int max_warm_context = 0;
  int k_core = 5;
  /// Cold users are sampled from the filtered log.
  bool cold_users_drawn_after_k_core = true;
};

struct ChronoSplit {
  std::vector<std::size_t> train;    // positions, chronological
  std::vector<std::size_t> holdout;  // positions, chronological
  std::int64_t boundary_timestamp = 0;
};

/// Global split: the first floor(N * train_fraction) events in
/// (timestamp, position) order are train.
ChronoSplit chronological_split(const InteractionLog& log, double train_fraction);

struct ItemPartition {
  std::set<ItemId> warm;
  std::set<ItemId> cold;
};

/// An item is cold iff it occurs in the holdout and never in train.
ItemPartition classify_item_cold(const InteractionLog& log, const ChronoSplit& split);

struct UserPartition {
  std::set<UserId> warm;
  std::set<UserId> cold;
};

/// Uniform sample without replacement of floor(|U| * user_fraction) users.
UserPartition holdout_cold_users(const InteractionLog& log, double user_fraction, std::uint64_t seed);

/// Most recent L items of `history`, L ~ U[min_len, min(max_len, |history|)].
std::vector<ItemId> truncate_cold_user_history(const std::vector<ItemId>& history,
                                               std::uint64_t seed, int min_len, int max_len);

SplitManifest build_manifest(const InteractionLog& log, const ProtocolConfig& config);

struct Violation {
  std::string code;
  std::string message;
};

/// Empty iff every manifest and eval-case invariant holds against `log`.
std::vector<Violation> validate_manifest(const SplitManifest& manifest, const InteractionLog& log);

nlohmann::json manifest_to_json(const SplitManifest& manifest);
SplitManifest manifest_from_json(const nlohmann::json& j);
std::string manifest_dump(const SplitManifest& manifest);

}  // namespace coldgen
