#include "coldgen/identifiers.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace coldgen {

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kAtomic: return "atomic";
    case Scheme::kTextual: return "textual";
    case Scheme::kRq: return "rq";
    case Scheme::kBkm: return "bkm";
    case Scheme::kOpq: return "opq";
  }
  return "atomic";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "atomic") return Scheme::kAtomic;
  if (s == "textual") return Scheme::kTextual;
  if (s == "rq") return Scheme::kRq;
  if (s == "bkm") return Scheme::kBkm;
  if (s == "opq") return Scheme::kOpq;
  throw ValidationError("unknown identifier scheme '" + s + "'");
}

bool is_semantic(Scheme scheme) {
  return scheme == Scheme::kRq || scheme == Scheme::kBkm || scheme == Scheme::kOpq;
}

ContentEmbedding content_embedding(const ItemMeta& meta, int dim, std::uint64_t seed) {
  if (dim < 8) throw ValidationError("content embedding dimension must be >= 8");
  ContentEmbedding out{meta.item_id, Vector::Zero(dim), false};
  auto add = [&](const std::string& text) {
    for (const auto& w : word_tokens(text)) {
      auto h = hash64(w, seed);
      auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim));
      out.vector[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
  };
  add(meta.title);
  for (const auto& c : meta.categories) add(c);
  double norm = out.vector.norm();
  if (norm == 0.0) {
    out.empty = true;
  } else {
    out.vector /= norm;
  }
  return out;
}

namespace {

const char* kReserved[] = {"<bos>", "<eos>", "<sep>"};
const char* kPadToken = "<pad>";

std::string suffix_display(int n) { return "#" + std::to_string(n); }

}  // namespace

IdentifierMap::IdentifierMap(Scheme scheme, int max_len) : scheme_(scheme), max_len_(max_len) {
  for (const char* r : kReserved) intern(r);
}

const std::vector<TokenId>& IdentifierMap::at(const ItemId& item) const {
  auto it = tokens_.find(item);
  if (it == tokens_.end()) throw ValidationError("item " + item + " has no identifier");
  return it->second;
}

TokenId IdentifierMap::intern(const std::string& display) {
  auto it = vocab_index_.find(display);
  if (it != vocab_index_.end()) return it->second;
  auto id = static_cast<TokenId>(vocab_.size());
  vocab_.push_back(display);
  vocab_index_.emplace(display, id);
  return id;
}

std::optional<TokenId> IdentifierMap::find_token(const std::string& display) const {
  auto it = vocab_index_.find(display);
  if (it == vocab_index_.end()) return std::nullopt;
  return it->second;
}

bool IdentifierMap::is_suffix_token(TokenId t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size()) return false;
  const auto& s = vocab_[t];
  return s.size() > 1 && s[0] == '#';
}

void IdentifierMap::set_item(const ItemId& item, std::vector<TokenId> seq) {
  if (tokens_.contains(item)) throw ValidationError("item " + item + " already has an identifier");
  if (seq.empty()) throw ValidationError("item " + item + " would get an empty identifier");
  auto [it, inserted] = owner_.emplace(seq, item);
  if (!inserted) {
    throw ValidationError("identifier collision between " + item + " and " + it->second);
  }
  max_len_ = std::max(max_len_, static_cast<int>(seq.size()));
  tokens_.emplace(item, std::move(seq));
}

void IdentifierMap::assign_batch(const std::vector<std::pair<ItemId, std::vector<TokenId>>>& items) {
  std::map<std::vector<TokenId>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < items.size(); ++i) groups[items[i].second].push_back(i);
  for (const auto& [item, base] : items) {
    const auto& group = groups.at(base);
    int& count = base_counts_[base];
    std::vector<TokenId> seq = base;
    if (group.size() > 1 || count > 0) seq.push_back(intern(suffix_display(++count)));
    else ++count;
    set_item(item, std::move(seq));
  }
}

const std::vector<TokenId>& IdentifierMap::assign_incremental(const ItemId& item, const std::vector<TokenId>& base) {
  int& count = base_counts_[base];
  std::vector<TokenId> seq = base;
  if (count > 0) seq.push_back(intern(suffix_display(count + 1)));
  ++count;
  set_item(item, std::move(seq));
  return tokens_.at(item);
}

std::vector<std::string> IdentifierMap::describe(const ItemId& item) const {
  std::vector<std::string> out;
  for (auto t : at(item)) out.push_back(vocab_[t]);
  return out;
}

IdentifierMap assign_atomic(const std::vector<ItemId>& items) {
  if (items.empty()) throw ValidationError("assign_atomic needs a non-empty catalog");
  IdentifierMap map(Scheme::kAtomic, 1);
  extend_atomic(map, items);
  return map;
}

IdentifierMap assign_atomic(const ItemCatalog& catalog) {
  std::vector<ItemId> items;
  for (const auto& [id, _] : catalog) items.push_back(id);
  return assign_atomic(items);
}

void extend_atomic(IdentifierMap& map, const std::vector<ItemId>& items) {
  for (const auto& item : items) {
    if (map.contains(item)) throw ValidationError("item " + item + " already has an identifier");
    TokenId t = map.intern("item:" + item);
    map.assign_incremental(item, {t});
  }
}

namespace {

std::vector<TokenId> title_tokens(IdentifierMap& map, const ItemMeta& meta, int max_words) {
  auto words = word_tokens(meta.title);
  if (words.empty()) {
    // Category words stand in for a missing title.
    for (const auto& c : meta.categories) {
      for (auto& w : word_tokens(c)) words.push_back(std::move(w));
    }
  }
  if (words.empty()) words.push_back(meta.item_id);
  if (static_cast<int>(words.size()) > max_words) words.resize(static_cast<std::size_t>(max_words));
  std::vector<TokenId> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(map.intern(w));
  return out;
}

}  // namespace

IdentifierMap assign_textual(const ItemCatalog& catalog, const std::vector<ItemId>& items, int max_words) {
  if (items.empty()) throw ValidationError("assign_textual needs a non-empty catalog");
  if (max_words < 1) throw ValidationError("max_words must be positive");
  IdentifierMap map(Scheme::kTextual, 1);
  std::vector<std::pair<ItemId, std::vector<TokenId>>> batch;
  for (const auto& item : items) {
    auto it = catalog.find(item);
    if (it == catalog.end()) throw ValidationError("item " + item + " missing from catalog");
    batch.emplace_back(item, title_tokens(map, it->second, max_words));
  }
  map.assign_batch(batch);
  return map;
}

IdentifierMap assign_textual(const ItemCatalog& catalog, int max_words) {
  std::vector<ItemId> items;
  for (const auto& [id, _] : catalog) items.push_back(id);
  return assign_textual(catalog, items, max_words);
}

void extend_textual(IdentifierMap& map, const ItemCatalog& catalog, const std::vector<ItemId>& items,
                    int max_words) {
  for (const auto& item : items) {
    auto it = catalog.find(item);
    if (it == catalog.end()) throw ValidationError("item " + item + " missing from catalog");
    map.assign_incremental(item, title_tokens(map, it->second, max_words));
  }
}

namespace {

std::string code_display(const Codebook& cb, int level, int code) {
  const char* prefix = cb.kind == CodebookKind::kOpq ? "S" : "L";
  return "<" + std::string(prefix) + std::to_string(level) + ":" + std::to_string(code) + ">";
}

Scheme scheme_of(const Codebook& cb) {
  switch (cb.kind) {
    case CodebookKind::kRq: return Scheme::kRq;
    case CodebookKind::kBkm: return Scheme::kBkm;
    case CodebookKind::kOpq: return Scheme::kOpq;
  }
  return Scheme::kRq;
}

IdentifierMap empty_semantic_map(const Codebook& cb) {
  IdentifierMap map(scheme_of(cb), cb.levels);
  // Flattened (level, centroid) vocabulary: id = 3 + level * K + centroid.
  for (int l = 0; l < cb.levels; ++l) {
    for (int c = 0; c < cb.codes_per_level; ++c) map.intern(code_display(cb, l, c));
  }
  if (cb.kind == CodebookKind::kBkm) map.intern(kPadToken);
  return map;
}

}  // namespace

std::vector<TokenId> code_tokens(IdentifierMap& map, const Codebook& cb, const std::vector<int>& codes) {
  std::vector<TokenId> out;
  out.reserve(codes.size());
  for (std::size_t l = 0; l < codes.size(); ++l) {
    if (codes[l] == kPadCode) {
      out.push_back(map.intern(kPadToken));
    } else {
      out.push_back(IdentifierMap::kNumReserved + static_cast<TokenId>(l) * cb.codes_per_level + codes[l]);
    }
  }
  return out;
}

std::vector<TokenId> encode_item(IdentifierMap& map, const Codebook& codebook, const Vector& embedding) {
  return code_tokens(map, codebook, quantize(codebook, embedding));
}

IdentifierMap encode_items(const Codebook& codebook, const std::vector<ContentEmbedding>& embeddings) {
  if (embeddings.empty()) throw ValidationError("encode_items needs at least one item");
  IdentifierMap map = empty_semantic_map(codebook);
  std::vector<std::pair<ItemId, std::vector<TokenId>>> batch;
  batch.reserve(embeddings.size());
  for (const auto& e : embeddings) batch.emplace_back(e.item_id, encode_item(map, codebook, e.vector));
  map.assign_batch(batch);
  return map;
}

const std::vector<TokenId>& encode_cold_item(IdentifierMap& map, const Codebook& codebook,
                                             const ContentEmbedding& embedding) {
  return map.assign_incremental(embedding.item_id, encode_item(map, codebook, embedding.vector));
}

nlohmann::json identifier_map_to_json(const IdentifierMap& map) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& [item, seq] : map.tokens()) items.push_back({{"item_id", item}, {"tokens", seq}});
  return {{"format_version", 1},
          {"scheme", to_string(map.scheme())},
          {"max_len", map.max_len()},
          {"vocab", map.vocab()},
          {"items", items}};
}

IdentifierMap identifier_map_from_json(const nlohmann::json& j) {
  try {
    IdentifierMap map(scheme_from_string(j.at("scheme").get<std::string>()), j.at("max_len").get<int>());
    auto vocab = j.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = IdentifierMap::kNumReserved; i < vocab.size(); ++i) {
      if (map.intern(vocab[i]) != static_cast<TokenId>(i)) throw ParseError("idmap", 0, "duplicate vocab entry");
    }
    for (const auto& e : j.at("items")) {
      auto seq = e.at("tokens").get<std::vector<TokenId>>();
      for (auto t : seq) {
        if (t < 0 || static_cast<std::size_t>(t) >= map.vocab_size()) throw ParseError("idmap", 0, "token out of range");
      }
      std::vector<TokenId> base = seq;
      int count = 1;
      if (seq.size() > 1 && map.is_suffix_token(seq.back())) {
        count = std::stoi(map.vocab()[seq.back()].substr(1));
        base.pop_back();
      }
      int& c = map.base_counts_[base];
      c = std::max(c, count);
      map.set_item(e.at("item_id").get<std::string>(), std::move(seq));
    }
    return map;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("idmap", 0, e.what());
  }
}

}  // namespace coldgen
