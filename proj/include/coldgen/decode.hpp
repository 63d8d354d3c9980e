#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "coldgen/identifiers.hpp"
#include "coldgen/model.hpp"

namespace coldgen {

/// Prefix tree over identifier token sequences. Node 0 is the root; a node
/// may be terminal and still have children when identifiers vary in length.
class IdTrie {
 public:
  struct Node {
    std::map<TokenId, std::uint32_t> children;
    std::optional<ItemId> item;
  };

  IdTrie();

  const Node& node(std::uint32_t i) const { return nodes_.at(i); }
  const Node& root() const { return nodes_[0]; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_items() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool contains(const ItemId& item) const { return items_.contains(item); }

  /// Adds one path. Throws ValidationError when the full sequence is already
  /// present or the item is already annotated.
  void insert(const ItemId& item, std::span<const TokenId> seq);

  /// Node reached by `prefix`, if any.
  std::optional<std::uint32_t> find(std::span<const TokenId> prefix) const;

 private:
  std::vector<Node> nodes_;
  std::map<ItemId, std::uint32_t> items_;
};

/// Trie over the identifiers of `candidates`. Throws on an empty candidate
/// set or an item without an identifier.
IdTrie build_trie(const IdentifierMap& id_map, const std::vector<ItemId>& candidates);

/// Adds `new_items` to the trie in place.
void insert_items(IdTrie& trie, const IdentifierMap& id_map, const std::vector<ItemId>& new_items);

/// Every (item, sequence) path, in lexicographic token order.
std::vector<std::pair<ItemId, std::vector<TokenId>>> enumerate(const IdTrie& trie);

/// Terminal item for an exact path match.
std::optional<ItemId> resolve(const IdTrie& trie, std::span<const TokenId> seq);

/// SHA-256 of the subtree under `prefix` (structure and annotations).
std::string subtree_digest(const IdTrie& trie, std::span<const TokenId> prefix);

struct RankedEntry {
  ItemId item_id;
  double logprob = 0.0;
};

/// Items by (logprob desc, item_id asc).
struct RankedList {
  std::vector<RankedEntry> entries;
  /// Fewer than K items were reachable.
  bool short_list = false;
};

struct BeamOptions {
  int beam_width = 0;  // 0 selects max(64, 4K)
  /// Rank finished hypotheses by logprob / length.
  bool length_normalize = false;
};

int default_beam_width(int k);

/// Trie-constrained beam search for the K most likely items.
RankedList beam_search(const SequenceModel& model, std::span<const TokenId> context, const IdTrie& trie, int k,
                       const BeamOptions& options = {});

/// Scores every candidate with sequence_logprob and sorts.
RankedList rank_items_exhaustive(const SequenceModel& model, std::span<const TokenId> context,
                                 const IdentifierMap& id_map, const std::vector<ItemId>& candidates);

/// Ancestral sample of one identifier: at each node the model's next-token
/// distribution is renormalized over the node's children. At a terminal node
/// with children, stopping takes the probability mass not on the children.
std::vector<TokenId> sample_identifier(const SequenceModel& model, const DecodeState& context_state,
                                       const IdTrie& trie, Rng& rng);

/// `case_id,rank,item_id,logprob` rows (header written when `header`).
void write_ranked_csv(std::ostream& out, std::size_t case_id, const RankedList& list, bool header);

}  // namespace coldgen
