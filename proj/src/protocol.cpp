#include "coldgen/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

namespace coldgen {

namespace {

// Floor of a fractional count, tolerant of representation error such as
// 0.29 * 100 = 28.999999999999996.
std::size_t floor_count(std::size_t n, double fraction) {
  double x = static_cast<double>(n) * fraction;
  return static_cast<std::size_t>(std::floor(x + 1e-9 * std::max(1.0, x)));
}

const char* split_name(CaseSplit s) { return s == CaseSplit::kValidation ? "validation" : "test"; }

}  // namespace

ChronoSplit chronological_split(const InteractionLog& log, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0, 1)");
  }
  if (log.size() < 2) throw ValidationError("chronological_split needs at least 2 interactions");
  auto order = log.chronological_order();
  std::size_t n_train = floor_count(order.size(), train_fraction);
  if (n_train == 0) throw ValidationError("chronological_split produced an empty train set");
  ChronoSplit out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.holdout.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  out.boundary_timestamp = log.interactions()[out.train.back()].timestamp;
  return out;
}

ItemPartition classify_item_cold(const InteractionLog& log, const ChronoSplit& split) {
  ItemPartition out;
  for (auto p : split.train) out.warm.insert(log.interactions()[p].item_id);
  for (auto p : split.holdout) {
    const auto& item = log.interactions()[p].item_id;
    if (!out.warm.contains(item)) out.cold.insert(item);
  }
  return out;
}

UserPartition holdout_cold_users(const InteractionLog& log, double user_fraction, std::uint64_t seed) {
  if (!(user_fraction > 0.0 && user_fraction < 1.0)) {
    throw ValidationError("user_fraction must lie in (0, 1)");
  }
  std::vector<UserId> users;
  users.reserve(log.num_users());
  for (const auto& [u, _] : log.user_index()) users.push_back(u);
  std::size_t n_cold = floor_count(users.size(), user_fraction);
  if (n_cold == 0) throw ValidationError("cold-user sample size is 0");
  Rng rng(seed);
  // Partial Fisher-Yates over the sorted user list.
  for (std::size_t i = 0; i < n_cold; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, users.size() - 1);
    std::swap(users[i], users[pick(rng)]);
  }
  UserPartition out;
  out.cold.insert(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(n_cold));
  out.warm.insert(users.begin() + static_cast<std::ptrdiff_t>(n_cold), users.end());
  return out;
}

std::vector<ItemId> truncate_cold_user_history(const std::vector<ItemId>& history,
                                               std::uint64_t seed, int min_len, int max_len) {
  if (history.empty()) throw ValidationError("cannot truncate an empty history");
  if (min_len < 1 || max_len < min_len) throw ValidationError("need 1 <= min_len <= max_len");
  auto n = static_cast<int>(history.size());
  int hi = std::min(max_len, n);
  int lo = std::min(min_len, hi);
  Rng rng(seed);
  int len = std::uniform_int_distribution<int>(lo, hi)(rng);
  return {history.end() - len, history.end()};
}

SplitManifest build_manifest(const InteractionLog& log, const ProtocolConfig& config) {
  if (!(config.val_fraction_of_holdout >= 0.0 && config.val_fraction_of_holdout < 1.0)) {
    throw ValidationError("val_fraction_of_holdout must lie in [0, 1)");
  }
  if (config.cold_context_min < 1 || config.cold_context_max < config.cold_context_min) {
    throw ValidationError("cold context bounds must satisfy 1 <= min <= max");
  }
  auto split = chronological_split(log, config.train_fraction);
  auto items = classify_item_cold(log, split);
  auto users = holdout_cold_users(log, config.user_fraction, config.seed);

  SplitManifest m;
  m.boundary_timestamp = split.boundary_timestamp;
  m.warm_items = std::move(items.warm);
  m.cold_items = std::move(items.cold);
  m.warm_users = std::move(users.warm);
  m.cold_users = std::move(users.cold);
  m.seed = config.seed;
  m.train_fraction = config.train_fraction;
  m.user_fraction = config.user_fraction;
  m.val_fraction_of_holdout = config.val_fraction_of_holdout;
  m.cold_context_min = config.cold_context_min;
  m.cold_context_max = config.cold_context_max;
  m.max_warm_context = config.max_warm_context;
  m.k_core = config.k_core;

  const auto& rows = log.interactions();
  for (auto p : split.train) {
    if (!m.cold_users.contains(rows[p].user_id)) m.train_interactions.push_back(p);
  }
  std::sort(m.train_interactions.begin(), m.train_interactions.end());

  // Rank of each position within its user's chronological list.
  std::vector<std::size_t> rank_in_user(rows.size());
  for (const auto& [_, positions] : log.user_index()) {
    for (std::size_t r = 0; r < positions.size(); ++r) rank_in_user[positions[r]] = r;
  }

  std::size_t kept = 0;
  for (auto p : split.holdout) {
    const auto& row = rows[p];
    const auto& positions = log.user_index().at(row.user_id);
    std::size_t r = rank_in_user[p];
    if (r == 0) continue;
    std::vector<ItemId> prior;
    prior.reserve(r);
    for (std::size_t i = 0; i < r; ++i) prior.push_back(rows[positions[i]].item_id);

    EvalCase c;
    c.user_id = row.user_id;
    c.target = row.item_id;
    c.timestamp = row.timestamp;
    bool cold_user = m.cold_users.contains(row.user_id);
    if (cold_user) {
      c.context = truncate_cold_user_history(prior, derive_seed(config.seed, "cold-context/" + row.user_id),
                                             config.cold_context_min, config.cold_context_max);
    } else if (config.max_warm_context > 0 &&
               prior.size() > static_cast<std::size_t>(config.max_warm_context)) {
      c.context.assign(prior.end() - config.max_warm_context, prior.end());
    } else {
      c.context = std::move(prior);
    }
    c.setting_tags.insert(m.cold_items.contains(c.target) ? tags::kColdItem : tags::kWarmItem);
    c.setting_tags.insert(cold_user ? tags::kColdUser : tags::kWarmUser);
    c.context_has_cold_items = std::any_of(c.context.begin(), c.context.end(),
                                           [&](const ItemId& i) { return m.cold_items.contains(i); });
    // Chronological interleave: case i goes to validation when the running
    // validation quota floor((i+1) v) increments.
    double v = config.val_fraction_of_holdout;
    bool to_val = std::floor(static_cast<double>(kept + 1) * v + 1e-9) >
                  std::floor(static_cast<double>(kept) * v + 1e-9);
    c.split = to_val ? CaseSplit::kValidation : CaseSplit::kTest;
    c.case_id = kept++;
    m.eval_cases.push_back(std::move(c));
  }
  return m;
}

std::vector<Violation> validate_manifest(const SplitManifest& m, const InteractionLog& log) {
  std::vector<Violation> out;
  auto add = [&](std::string code, std::string msg) { out.push_back({std::move(code), std::move(msg)}); };

  for (const auto& i : m.warm_items) {
    if (m.cold_items.contains(i)) add("item_overlap", "item " + i + " is both warm and cold");
  }
  for (const auto& u : m.warm_users) {
    if (m.cold_users.contains(u)) add("user_overlap", "user " + u + " is both warm and cold");
  }
  for (const auto& [item, _] : log.item_index()) {
    if (!m.warm_items.contains(item) && !m.cold_items.contains(item)) {
      add("item_uncovered", "item " + item + " is neither warm nor cold");
    }
  }
  const auto& rows = log.interactions();
  for (auto p : m.train_interactions) {
    if (p >= rows.size()) {
      add("train_position", "train position " + std::to_string(p) + " out of range");
      continue;
    }
    if (rows[p].timestamp > m.boundary_timestamp) {
      add("train_after_boundary", "train interaction " + std::to_string(p) + " is after the boundary");
    }
    if (m.cold_users.contains(rows[p].user_id)) {
      add("cold_user_leak", "train interaction " + std::to_string(p) + " belongs to cold user " +
                                rows[p].user_id);
    }
    if (m.cold_items.contains(rows[p].item_id)) {
      add("cold_item_in_train", "train interaction " + std::to_string(p) + " uses cold item " +
                                    rows[p].item_id);
    }
  }
  for (const auto& c : m.eval_cases) {
    auto id = "case " + std::to_string(c.case_id);
    if (c.context.empty()) add("empty_context", id + " has an empty context");
    bool cold_item = m.cold_items.contains(c.target);
    if (cold_item != c.has_tag(tags::kColdItem) || cold_item == c.has_tag(tags::kWarmItem)) {
      add("item_tag", id + " item tag disagrees with the cold-item set");
    }
    bool cold_user = m.cold_users.contains(c.user_id);
    if (cold_user != c.has_tag(tags::kColdUser) || cold_user == c.has_tag(tags::kWarmUser)) {
      add("user_tag", id + " user tag disagrees with the cold-user set");
    }
    if (!m.warm_users.contains(c.user_id) && !cold_user) add("unknown_user", id + " has unknown user");
    if (cold_user && (c.context.size() < static_cast<std::size_t>(m.cold_context_min) ||
                      c.context.size() > static_cast<std::size_t>(m.cold_context_max))) {
      add("cold_context_length", id + " cold-user context length " + std::to_string(c.context.size()) +
                                     " outside [" + std::to_string(m.cold_context_min) + ", " +
                                     std::to_string(m.cold_context_max) + "]");
    }
    for (const auto& i : c.context) {
      if (!m.warm_items.contains(i) && !m.cold_items.contains(i)) {
        add("context_item", id + " context item " + i + " is outside the item universe");
      }
    }
    if (c.timestamp < m.boundary_timestamp) add("case_before_boundary", id + " predates the boundary");
  }
  return out;
}

nlohmann::json manifest_to_json(const SplitManifest& m) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : m.eval_cases) {
    cases.push_back({{"case_id", c.case_id},
                     {"user_id", c.user_id},
                     {"context", c.context},
                     {"target", c.target},
                     {"timestamp", c.timestamp},
                     {"setting_tags", std::vector<std::string>(c.setting_tags.begin(), c.setting_tags.end())},
                     {"split", split_name(c.split)},
                     {"context_has_cold_items", c.context_has_cold_items}});
  }
  return {
      {"format_version", 1},
      {"boundary_timestamp", m.boundary_timestamp},
      {"seed", m.seed},
      {"train_fraction", m.train_fraction},
      {"user_fraction", m.user_fraction},
      {"val_fraction_of_holdout", m.val_fraction_of_holdout},
      {"cold_context_min", m.cold_context_min},
      {"cold_context_max", m.cold_context_max},
      {"max_warm_context", m.max_warm_context},
      {"k_core", m.k_core},
      {"cold_users_drawn_after_k_core", m.cold_users_drawn_after_k_core},
      {"warm_items", std::vector<ItemId>(m.warm_items.begin(), m.warm_items.end())},
      {"cold_items", std::vector<ItemId>(m.cold_items.begin(), m.cold_items.end())},
      {"warm_users", std::vector<UserId>(m.warm_users.begin(), m.warm_users.end())},
      {"cold_users", std::vector<UserId>(m.cold_users.begin(), m.cold_users.end())},
      {"train_interactions", m.train_interactions},
      {"eval_cases", std::move(cases)},
  };
}

SplitManifest manifest_from_json(const nlohmann::json& j) {
  try {
    SplitManifest m;
    m.boundary_timestamp = j.at("boundary_timestamp").get<std::int64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_fraction = j.at("train_fraction").get<double>();
    m.user_fraction = j.value("user_fraction", 0.1);
    m.val_fraction_of_holdout = j.value("val_fraction_of_holdout", 0.5);
    m.cold_context_min = j.value("cold_context_min", 1);
    m.cold_context_max = j.value("cold_context_max", 10);
    m.max_warm_context = j.value("max_warm_context", 0);
    m.k_core = j.value("k_core", 5);
    m.cold_users_drawn_after_k_core = j.value("cold_users_drawn_after_k_core", true);
    for (const auto& s : j.at("warm_items")) m.warm_items.insert(s.get<std::string>());
    for (const auto& s : j.at("cold_items")) m.cold_items.insert(s.get<std::string>());
    for (const auto& s : j.at("warm_users")) m.warm_users.insert(s.get<std::string>());
    for (const auto& s : j.at("cold_users")) m.cold_users.insert(s.get<std::string>());
    m.train_interactions = j.at("train_interactions").get<std::vector<std::size_t>>();
    for (const auto& cj : j.at("eval_cases")) {
      EvalCase c;
      c.case_id = cj.at("case_id").get<std::size_t>();
      c.user_id = cj.at("user_id").get<std::string>();
      c.context = cj.at("context").get<std::vector<ItemId>>();
      c.target = cj.at("target").get<std::string>();
      c.timestamp = cj.at("timestamp").get<std::int64_t>();
      for (const auto& t : cj.at("setting_tags")) c.setting_tags.insert(t.get<std::string>());
      c.split = cj.at("split").get<std::string>() == "validation" ? CaseSplit::kValidation : CaseSplit::kTest;
      c.context_has_cold_items = cj.value("context_has_cold_items", false);
      m.eval_cases.push_back(std::move(c));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest", 0, e.what());
  }
}

std::string manifest_dump(const SplitManifest& manifest) { return manifest_to_json(manifest).dump(1) + "\n"; }

}  // namespace coldgen
