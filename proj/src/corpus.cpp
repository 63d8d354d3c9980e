#include "coldgen/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace coldgen {

InteractionLog::InteractionLog(std::vector<Interaction> interactions)
    : interactions_(std::move(interactions)) {
  for (std::size_t pos = 0; pos < interactions_.size(); ++pos) {
    const auto& it = interactions_[pos];
    if (it.user_id.empty() || it.item_id.empty()) {
      throw ValidationError("interaction " + std::to_string(pos) + " has an empty id");
    }
    if (it.timestamp < 0) {
      throw ValidationError("interaction " + std::to_string(pos) + " has a negative timestamp");
    }
    user_index_[it.user_id].push_back(pos);
    item_index_[it.item_id].push_back(pos);
  }
  auto by_time = [this](std::size_t a, std::size_t b) {
    const auto ta = interactions_[a].timestamp;
    const auto tb = interactions_[b].timestamp;
    return ta != tb ? ta < tb : a < b;
  };
  for (auto& [_, v] : user_index_) std::sort(v.begin(), v.end(), by_time);
  for (auto& [_, v] : item_index_) std::sort(v.begin(), v.end(), by_time);
}

std::vector<std::size_t> InteractionLog::chronological_order() const {
  std::vector<std::size_t> order(interactions_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    return interactions_[a].timestamp < interactions_[b].timestamp;
  });
  return order;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

}  // namespace

InteractionLog parse_interactions(std::string_view text, const std::string& source) {
  std::vector<Interaction> rows;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw ParseError(source, line_no,
                       "expected 3 tab-separated columns, got " + std::to_string(cols.size()));
    }
    if (cols[0].empty() || cols[1].empty()) throw ParseError(source, line_no, "empty id");
    std::int64_t ts = 0;
    auto ts_col = cols[2];
    auto [ptr, ec] = std::from_chars(ts_col.data(), ts_col.data() + ts_col.size(), ts);
    if (ec != std::errc() || ptr != ts_col.data() + ts_col.size()) {
      throw ParseError(source, line_no, "timestamp '" + std::string(ts_col) + "' is not an integer");
    }
    if (ts < 0) throw ParseError(source, line_no, "negative timestamp");
    rows.push_back({std::string(cols[0]), std::string(cols[1]), ts});
  }
  if (rows.empty()) throw ParseError(source, 0, "empty interaction log");
  return InteractionLog(std::move(rows));
}

InteractionLog load_interactions(const std::filesystem::path& path) {
  return parse_interactions(read_file(path), path.string());
}

std::string format_interactions(const InteractionLog& log) {
  std::string out;
  for (const auto& it : log.interactions()) {
    out += it.user_id;
    out += '\t';
    out += it.item_id;
    out += '\t';
    out += std::to_string(it.timestamp);
    out += '\n';
  }
  return out;
}

ItemCatalog parse_item_metadata(std::string_view text, const std::string& source) {
  ItemCatalog catalog;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(source, line_no, "expected a JSON object");
    if (!obj.contains("item_id") || !obj["item_id"].is_string()) {
      throw ParseError(source, line_no, "missing string field item_id");
    }
    ItemMeta meta;
    meta.item_id = obj["item_id"].get<std::string>();
    if (meta.item_id.empty()) throw ParseError(source, line_no, "empty item_id");
    if (obj.contains("title")) {
      if (!obj["title"].is_string()) throw ParseError(source, line_no, "title must be a string");
      meta.title = obj["title"].get<std::string>();
    }
    if (obj.contains("categories")) {
      const auto& cats = obj["categories"];
      if (!cats.is_array()) throw ParseError(source, line_no, "categories must be an array");
      for (const auto& c : cats) {
        if (!c.is_string()) throw ParseError(source, line_no, "categories must be strings");
        meta.categories.push_back(c.get<std::string>());
      }
    }
    if (meta.title.empty() && meta.categories.empty()) {
      throw ParseError(source, line_no, "item " + meta.item_id + " has neither title nor categories");
    }
    if (catalog.contains(meta.item_id)) {
      throw ParseError(source, line_no, "duplicate item_id " + meta.item_id);
    }
    auto id = meta.item_id;
    catalog.emplace(std::move(id), std::move(meta));
  }
  return catalog;
}

ItemCatalog load_item_metadata(const std::filesystem::path& path) {
  return parse_item_metadata(read_file(path), path.string());
}

std::string format_item_metadata(const ItemCatalog& catalog) {
  std::string out;
  for (const auto& [id, meta] : catalog) {
    if (meta.synthesized) continue;
    nlohmann::json obj = {{"item_id", id}, {"title", meta.title}, {"categories", meta.categories}};
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<ItemId> complete_catalog(ItemCatalog& catalog, const InteractionLog& log) {
  std::vector<ItemId> added;
  for (const auto& [item, _] : log.item_index()) {
    if (catalog.contains(item)) continue;
    catalog.emplace(item, ItemMeta{item, item, {}, true});
    added.push_back(item);
  }
  return added;
}

InteractionLog k_core_filter(const InteractionLog& log, int k) {
  if (k < 1) throw ValidationError("k_core_filter requires k >= 1");
  const auto& rows = log.interactions();
  std::vector<char> alive(rows.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string_view, int> user_deg;
    std::unordered_map<std::string_view, int> item_deg;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!alive[i]) continue;
      ++user_deg[rows[i].user_id];
      ++item_deg[rows[i].item_id];
    }
    // Users first, then items on the degrees left by the user pass.
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (alive[i] && user_deg[rows[i].user_id] < k) {
        alive[i] = 0;
        --item_deg[rows[i].item_id];
        changed = true;
      }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (alive[i] && item_deg[rows[i].item_id] < k) {
        alive[i] = 0;
        changed = true;
      }
    }
  }
  std::vector<Interaction> kept;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (alive[i]) kept.push_back(rows[i]);
  }
  InteractionLog out(std::move(kept));
  out.empty_warning = out.empty();
  return out;
}

std::map<UserId, std::vector<ItemId>> build_user_histories(const InteractionLog& log) {
  if (log.empty()) throw ValidationError("build_user_histories requires a non-empty log");
  std::map<UserId, std::vector<ItemId>> out;
  for (const auto& [user, positions] : log.user_index()) {
    auto& h = out[user];
    h.reserve(positions.size());
    for (auto p : positions) h.push_back(log.interactions()[p].item_id);
  }
  return out;
}

}  // namespace coldgen
