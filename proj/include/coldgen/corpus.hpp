#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "coldgen/common.hpp"

namespace coldgen {

struct Interaction {
  UserId user_id;
  ItemId item_id;
  std::int64_t timestamp = 0;
};

/// Timestamped interaction events with per-user and per-item position
/// indices. Positions index into `interactions()`; per-entity position lists
/// are ordered by (timestamp, original position).
class InteractionLog {
 public:
  InteractionLog() = default;
  explicit InteractionLog(std::vector<Interaction> interactions);

  const std::vector<Interaction>& interactions() const { return interactions_; }
  std::size_t size() const { return interactions_.size(); }
  bool empty() const { return interactions_.empty(); }

  const std::map<UserId, std::vector<std::size_t>>& user_index() const { return user_index_; }
  const std::map<ItemId, std::vector<std::size_t>>& item_index() const { return item_index_; }
  std::size_t num_users() const { return user_index_.size(); }
  std::size_t num_items() const { return item_index_.size(); }

  /// All positions sorted by (timestamp, position).
  std::vector<std::size_t> chronological_order() const;

  /// Set when a filter produced an empty log.
  bool empty_warning = false;

 private:
  std::vector<Interaction> interactions_;
  std::map<UserId, std::vector<std::size_t>> user_index_;
  std::map<ItemId, std::vector<std::size_t>> item_index_;
};

struct ItemMeta {
  ItemId item_id;
  std::string title;
  std::vector<std::string> categories;
  /// True when synthesized for an item missing from the metadata file.
  bool synthesized = false;
};

using ItemCatalog = std::map<ItemId, ItemMeta>;

/// Parse `user<TAB>item<TAB>timestamp` lines. Throws ParseError on malformed
/// rows (with line number) and on an empty file.
InteractionLog load_interactions(const std::filesystem::path& path);
InteractionLog parse_interactions(std::string_view text, const std::string& source = "<memory>");
std::string format_interactions(const InteractionLog& log);

/// Parse JSON-lines item metadata. Duplicate ids, missing ids, invalid JSON
/// and items with neither title nor categories are errors.
ItemCatalog load_item_metadata(const std::filesystem::path& path);
ItemCatalog parse_item_metadata(std::string_view text, const std::string& source = "<memory>");
std::string format_item_metadata(const ItemCatalog& catalog);

/// Adds a synthesized entry (title = item_id, no categories) for every item
/// of `log` missing from `catalog`. Returns the ids that were added.
std::vector<ItemId> complete_catalog(ItemCatalog& catalog, const InteractionLog& log);

/// Maximal sub-log in which every user and item has at least `k`
/// interactions, computed by alternating full-pass removal to a fixpoint.
/// Relative order of surviving rows is preserved.
InteractionLog k_core_filter(const InteractionLog& log, int k);

/// user -> chronologically ordered items. Requires a non-empty log.
std::map<UserId, std::vector<ItemId>> build_user_histories(const InteractionLog& log);

}  // namespace coldgen
