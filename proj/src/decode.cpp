#include "coldgen/decode.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace coldgen {

IdTrie::IdTrie() : nodes_(1) {}

void IdTrie::insert(const ItemId& item, std::span<const TokenId> seq) {
  if (seq.empty()) throw ValidationError("item " + item + " has an empty identifier");
  if (items_.contains(item)) throw ValidationError("item " + item + " is already in the trie");
  std::uint32_t cur = 0;
  for (auto t : seq) {
    auto it = nodes_[cur].children.find(t);
    if (it == nodes_[cur].children.end()) {
      auto next = static_cast<std::uint32_t>(nodes_.size());
      nodes_[cur].children.emplace(t, next);
      nodes_.emplace_back();
      cur = next;
    } else {
      cur = it->second;
    }
  }
  if (nodes_[cur].item) {
    throw ValidationError("identifier collision: " + item + " and " + *nodes_[cur].item + " share a sequence");
  }
  nodes_[cur].item = item;
  items_.emplace(item, cur);
}

std::optional<std::uint32_t> IdTrie::find(std::span<const TokenId> prefix) const {
  std::uint32_t cur = 0;
  for (auto t : prefix) {
    auto it = nodes_[cur].children.find(t);
    if (it == nodes_[cur].children.end()) return std::nullopt;
    cur = it->second;
  }
  return cur;
}

IdTrie build_trie(const IdentifierMap& id_map, const std::vector<ItemId>& candidates) {
  if (candidates.empty()) throw ValidationError("build_trie needs at least one candidate item");
  IdTrie trie;
  insert_items(trie, id_map, candidates);
  return trie;
}

void insert_items(IdTrie& trie, const IdentifierMap& id_map, const std::vector<ItemId>& new_items) {
  for (const auto& item : new_items) {
    if (!id_map.contains(item)) throw ValidationError("candidate " + item + " has no identifier");
    trie.insert(item, id_map.at(item));
  }
}

namespace {

void walk(const IdTrie& trie, std::uint32_t n, std::vector<TokenId>& path,
          std::vector<std::pair<ItemId, std::vector<TokenId>>>& out) {
  const auto& node = trie.node(n);
  if (node.item) out.emplace_back(*node.item, path);
  for (const auto& [t, c] : node.children) {
    path.push_back(t);
    walk(trie, c, path, out);
    path.pop_back();
  }
}

void serialize(const IdTrie& trie, std::uint32_t n, std::string& out) {
  const auto& node = trie.node(n);
  out += '(';
  if (node.item) out += "=" + *node.item + ";";
  for (const auto& [t, c] : node.children) {
    out += std::to_string(t);
    serialize(trie, c, out);
  }
  out += ')';
}

}  // namespace

std::vector<std::pair<ItemId, std::vector<TokenId>>> enumerate(const IdTrie& trie) {
  std::vector<std::pair<ItemId, std::vector<TokenId>>> out;
  std::vector<TokenId> path;
  walk(trie, 0, path, out);
  return out;
}

std::optional<ItemId> resolve(const IdTrie& trie, std::span<const TokenId> seq) {
  if (seq.empty()) return std::nullopt;
  auto n = trie.find(seq);
  if (!n) return std::nullopt;
  return trie.node(*n).item;
}

std::string subtree_digest(const IdTrie& trie, std::span<const TokenId> prefix) {
  auto n = trie.find(prefix);
  if (!n) return sha256_hex("");
  std::string s;
  serialize(trie, *n, s);
  return sha256_hex(s);
}

int default_beam_width(int k) { return std::max(64, 4 * k); }

namespace {

bool ranked_before(const RankedEntry& a, double ka, const RankedEntry& b, double kb) {
  if (ka != kb) return ka > kb;
  return a.item_id < b.item_id;
}

void sort_ranked(std::vector<RankedEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    return ranked_before(a, a.logprob, b, b.logprob);
  });
}

}  // namespace

RankedList beam_search(const SequenceModel& model, std::span<const TokenId> context, const IdTrie& trie, int k,
                       const BeamOptions& options) {
  if (k < 1) throw ValidationError("K must be >= 1");
  if (trie.empty()) throw ValidationError("beam_search over an empty trie");
  const int width = options.beam_width > 0 ? options.beam_width : default_beam_width(k);
  if (width < k) throw ValidationError("beam width must be >= K");

  struct Hyp {
    std::uint32_t node;
    DecodeState state;
    double score;
    int len;
  };
  struct Cand {
    std::size_t beam;
    TokenId token;
    std::uint32_t child;
    double score;
  };
  struct Finished {
    RankedEntry entry;
    double key;
  };

  std::vector<Hyp> beams;
  beams.push_back({0, model.start(context), 0.0, 0});
  std::vector<Finished> finished;
  std::vector<double> lp;
  std::vector<double> keys;

  while (!beams.empty()) {
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < beams.size(); ++i) {
      const auto& b = beams[i];
      model.log_probs(b.state, lp);
      for (const auto& [tok, child] : trie.node(b.node).children) {
        const double s = b.score + lp[tok];
        const auto& c = trie.node(child);
        if (c.item) {
          const double key = options.length_normalize ? s / (b.len + 1) : s;
          finished.push_back({{*c.item, s}, key});
        }
        if (!c.children.empty()) cands.push_back({i, tok, child, s});
      }
    }
    // Log-probabilities are <= 0, so a partial hypothesis already below the
    // K-th finished score can never enter the top K.
    if (!options.length_normalize && finished.size() >= static_cast<std::size_t>(k)) {
      keys.clear();
      for (const auto& f : finished) keys.push_back(f.key);
      std::nth_element(keys.begin(), keys.begin() + (k - 1), keys.end(), std::greater<>());
      const double kth = keys[static_cast<std::size_t>(k - 1)];
      std::erase_if(cands, [&](const Cand& c) { return c.score < kth; });
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
    if (cands.size() > static_cast<std::size_t>(width)) cands.resize(static_cast<std::size_t>(width));
    std::vector<Hyp> next;
    next.reserve(cands.size());
    for (const auto& c : cands) {
      Hyp h{c.child, beams[c.beam].state, c.score, beams[c.beam].len + 1};
      model.advance(h.state, c.token);
      next.push_back(std::move(h));
    }
    beams = std::move(next);
  }

  std::sort(finished.begin(), finished.end(), [](const Finished& a, const Finished& b) {
    return ranked_before(a.entry, a.key, b.entry, b.key);
  });
  RankedList out;
  out.short_list = trie.num_items() < static_cast<std::size_t>(k);
  for (const auto& f : finished) {
    if (out.entries.size() == static_cast<std::size_t>(k)) break;
    out.entries.push_back(f.entry);
  }
  return out;
}

RankedList rank_items_exhaustive(const SequenceModel& model, std::span<const TokenId> context,
                                 const IdentifierMap& id_map, const std::vector<ItemId>& candidates) {
  if (candidates.empty()) throw ValidationError("rank_items_exhaustive needs candidates");
  RankedList out;
  for (const auto& item : candidates) {
    out.entries.push_back({item, sequence_logprob(model, context, id_map.at(item))});
  }
  sort_ranked(out.entries);
  auto dup = std::adjacent_find(out.entries.begin(), out.entries.end(),
                                [](const RankedEntry& a, const RankedEntry& b) { return a.item_id == b.item_id; });
  if (dup != out.entries.end()) throw ValidationError("duplicate candidate " + dup->item_id);
  return out;
}

std::vector<TokenId> sample_identifier(const SequenceModel& model, const DecodeState& context_state,
                                       const IdTrie& trie, Rng& rng) {
  if (trie.empty()) throw ValidationError("cannot sample from an empty trie");
  DecodeState state = context_state;
  std::vector<TokenId> seq;
  std::vector<double> lp;
  std::vector<double> weights;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uint32_t cur = 0;
  for (;;) {
    const auto& node = trie.node(cur);
    if (node.children.empty()) return seq;
    model.log_probs(state, lp);
    weights.clear();
    double child_mass = 0.0;
    for (const auto& [tok, _] : node.children) {
      weights.push_back(std::exp(lp[tok]));
      child_mass += weights.back();
    }
    double stop = node.item ? std::max(0.0, 1.0 - child_mass) : 0.0;
    double total = child_mass + stop;
    double u = unif(rng) * total;
    if (node.item && u >= child_mass) return seq;
    std::size_t pick = 0;
    double acc = 0.0;
    for (; pick + 1 < weights.size(); ++pick) {
      acc += weights[pick];
      if (u < acc) break;
    }
    auto it = std::next(node.children.begin(), static_cast<std::ptrdiff_t>(pick));
    seq.push_back(it->first);
    cur = it->second;
    if (!trie.node(cur).children.empty()) model.advance(state, it->first);
  }
}

void write_ranked_csv(std::ostream& out, std::size_t case_id, const RankedList& list, bool header) {
  if (header) out << "case_id,rank,item_id,logprob\n";
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    out << case_id << ',' << (i + 1) << ',' << list.entries[i].item_id << ','
        << format_double(list.entries[i].logprob) << '\n';
  }
}

}  // namespace coldgen
