#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coldgen/common.hpp"
#include "coldgen/corpus.hpp"
#include "coldgen/quantizer.hpp"

namespace coldgen {

enum class Scheme { kAtomic, kTextual, kRq, kBkm, kOpq };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& s);
bool is_semantic(Scheme scheme);

/// Bag-of-words content vector for one item: unit L2 norm, or the zero
/// vector with `empty` set when the metadata yields no tokens.
struct ContentEmbedding {
  ItemId item_id;
  Vector vector;
  bool empty = false;
};

/// Signed feature hashing of the lowercase title and category words into
/// `dim` buckets, then L2 normalization.
ContentEmbedding content_embedding(const ItemMeta& meta, int dim, std::uint64_t seed);

/// Injective item -> token-sequence mapping and the token vocabulary it owns.
/// Token ids 0..2 are reserved for BOS, EOS and SEP so the map's vocabulary
/// doubles as the model vocabulary.
class IdentifierMap {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kSep = 2;
  static constexpr TokenId kNumReserved = 3;

  explicit IdentifierMap(Scheme scheme = Scheme::kAtomic, int max_len = 1);

  Scheme scheme() const { return scheme_; }
  int max_len() const { return max_len_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::map<ItemId, std::vector<TokenId>>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool contains(const ItemId& item) const { return tokens_.contains(item); }
  const std::vector<TokenId>& at(const ItemId& item) const;

  /// Id of `display`, appending it to the vocabulary when new.
  TokenId intern(const std::string& display);
  std::optional<TokenId> find_token(const std::string& display) const;
  bool is_suffix_token(TokenId t) const;

  /// Assign a batch of items whose base codes are final: every member of a
  /// group sharing a base code receives a suffix token #1..#m, singletons
  /// receive none. Items must be new to the map.
  void assign_batch(const std::vector<std::pair<ItemId, std::vector<TokenId>>>& items);

  /// Assign one item after the map is frozen: a colliding base code takes
  /// the next free suffix of that code's counter.
  const std::vector<TokenId>& assign_incremental(const ItemId& item, const std::vector<TokenId>& base);

  /// Display strings of an item's tokens.
  std::vector<std::string> describe(const ItemId& item) const;

 private:
  void set_item(const ItemId& item, std::vector<TokenId> seq);

  Scheme scheme_;
  int max_len_;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> vocab_index_;
  std::map<ItemId, std::vector<TokenId>> tokens_;
  std::map<std::vector<TokenId>, int> base_counts_;
  std::map<std::vector<TokenId>, ItemId> owner_;

  friend IdentifierMap identifier_map_from_json(const nlohmann::json& j);
};

/// One dedicated token per item, in the given order.
IdentifierMap assign_atomic(const std::vector<ItemId>& items);
IdentifierMap assign_atomic(const ItemCatalog& catalog);
/// Fresh tokens for items added after the map was built.
void extend_atomic(IdentifierMap& map, const std::vector<ItemId>& items);

/// Lowercase title words (truncated to `max_words`) over a shared word
/// vocabulary; duplicates are disambiguated with suffix tokens.
IdentifierMap assign_textual(const ItemCatalog& catalog, const std::vector<ItemId>& items, int max_words = 16);
IdentifierMap assign_textual(const ItemCatalog& catalog, int max_words = 16);
void extend_textual(IdentifierMap& map, const ItemCatalog& catalog, const std::vector<ItemId>& items,
                    int max_words = 16);

/// Token ids of a raw quantizer code in the map's flattened
/// (level, centroid) vocabulary. Pads map to the reserved pad token.
std::vector<TokenId> code_tokens(IdentifierMap& map, const Codebook& codebook, const std::vector<int>& codes);

/// Semantic map for `items` encoded with a trained codebook.
IdentifierMap encode_items(const Codebook& codebook, const std::vector<ContentEmbedding>& embeddings);

/// Token sequence for one embedding under the frozen codebook, without
/// touching the map (no disambiguation).
std::vector<TokenId> encode_item(IdentifierMap& map, const Codebook& codebook, const Vector& embedding);

/// Encode and register a cold item; the suffix counter continues from the
/// warm allocation. Never modifies the codebook.
const std::vector<TokenId>& encode_cold_item(IdentifierMap& map, const Codebook& codebook,
                                             const ContentEmbedding& embedding);

nlohmann::json identifier_map_to_json(const IdentifierMap& map);
IdentifierMap identifier_map_from_json(const nlohmann::json& j);

}  // namespace coldgen
