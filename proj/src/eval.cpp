#include "coldgen/eval.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

namespace coldgen {

std::size_t rank_of(const RankedList& ranked, const ItemId& target) {
  for (std::size_t i = 0; i < ranked.entries.size(); ++i) {
    if (ranked.entries[i].item_id == target) return i + 1;
  }
  return 0;
}

int recall_at_k(const RankedList& ranked, const ItemId& target, int k) {
  if (k < 1) throw ValidationError("K must be >= 1");
  auto r = rank_of(ranked, target);
  return r != 0 && r <= static_cast<std::size_t>(k) ? 1 : 0;
}

double ndcg_at_k(const RankedList& ranked, const ItemId& target, int k) {
  if (k < 1) throw ValidationError("K must be >= 1");
  auto r = rank_of(ranked, target);
  if (r == 0 || r > static_cast<std::size_t>(k)) return 0.0;
  return 1.0 / std::log2(static_cast<double>(r) + 1.0);
}

std::string to_string(Protocol protocol) {
  return protocol == Protocol::kItemCold ? "item_cold" : "user_cold";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "item_cold") return Protocol::kItemCold;
  if (s == "user_cold") return Protocol::kUserCold;
  throw ValidationError("unknown protocol '" + s + "'");
}

void aggregate(EvalReport& report) {
  report.partitions.clear();
  report.partitions[partitions::kWarmTest];
  report.partitions[partitions::kColdTest];
  std::map<std::string, std::pair<double, double>> sums;
  for (const auto& c : report.cases) {
    ++report.partitions[c.partition].n;
    auto& s = sums[c.partition];
    s.first += c.recall;
    s.second += c.ndcg;
  }
  for (auto& [name, st] : report.partitions) {
    if (st.n == 0) continue;
    st.recall = sums[name].first / static_cast<double>(st.n);
    st.ndcg = sums[name].second / static_cast<double>(st.n);
  }
}

EvalReport evaluate(const SequenceModel& model, const SplitManifest& manifest, const IdentifierMap& id_map,
                    const EvalOptions& options) {
  if (options.k < 1) throw ValidationError("K must be >= 1");
  EvalReport report;
  report.scheme = to_string(id_map.scheme());
  report.model = model.descriptor();
  report.setting = to_string(options.protocol);
  report.k = options.k;

  std::vector<ItemId> warm(manifest.warm_items.begin(), manifest.warm_items.end());
  IdTrie trie = build_trie(id_map, warm);
  const bool item_protocol = options.protocol == Protocol::kItemCold;
  if (item_protocol && !options.exclude_cold_items) {
    insert_items(trie, id_map, std::vector<ItemId>(manifest.cold_items.begin(), manifest.cold_items.end()));
  }

  bool header = true;
  for (const auto& c : manifest.eval_cases) {
    if (c.split != CaseSplit::kTest) continue;
    const bool cold_user = c.has_tag(tags::kColdUser);
    const bool cold_target = c.has_tag(tags::kColdItem);
    std::string partition;
    if (item_protocol) {
      if (cold_user) continue;
      partition = cold_target ? partitions::kColdTest : partitions::kWarmTest;
    } else {
      if (cold_target) {
        ++report.excluded_cold_target;
        continue;
      }
      if (cold_user && c.context_has_cold_items) {
        ++report.excluded_cold_context;
        continue;
      }
      partition = cold_user ? partitions::kColdTest : partitions::kWarmTest;
    }
    std::vector<const std::vector<TokenId>*> seqs;
    auto first = c.context.begin();
    if (options.max_context_items > 0 && c.context.size() > static_cast<std::size_t>(options.max_context_items)) {
      first = c.context.end() - options.max_context_items;
    }
    for (auto it = first; it != c.context.end(); ++it) seqs.push_back(&id_map.at(*it));
    const auto ctx = serialize_context(seqs);
    const RankedList ranked = beam_search(model, ctx, trie, options.k, options.beam);
    if (options.ranked_csv) {
      write_ranked_csv(*options.ranked_csv, c.case_id, ranked, header);
      header = false;
    }
    CaseScore s;
    s.case_id = c.case_id;
    s.partition = partition;
    s.setting_tags = c.setting_tags;
    s.rank = rank_of(ranked, c.target);
    s.recall = recall_at_k(ranked, c.target, options.k);
    s.ndcg = ndcg_at_k(ranked, c.target, options.k);
    report.cases.push_back(std::move(s));
  }
  aggregate(report);
  return report;
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  // Modified Lentz evaluation of the continued fraction.
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 1000; ++m) {
    const double dm = m;
    double num = dm * (b - dm) * x / ((a + 2.0 * dm - 1.0) * (a + 2.0 * dm));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + dm) * (a + b + dm) * x / ((a + 2.0 * dm) * (a + 2.0 * dm + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return std::exp(ln_front) * f / a;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("degrees of freedom must be > 0");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw ValidationError("paired t-test needs at least 2 pairs");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult r;
  r.df = static_cast<int>(a.size()) - 1;
  r.mean_diff = mean;
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  r.p = incomplete_beta(r.df / 2.0, 0.5, r.df / (r.df + r.t * r.t));
  return r;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json parts = nlohmann::json::object();
  for (const auto& [name, st] : r.partitions) {
    parts[name] = {{"n", st.n}, {"recall", opt(st.recall)}, {"ndcg", opt(st.ndcg)}};
  }
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : r.cases) {
    cases.push_back({{"case_id", c.case_id},
                     {"partition", c.partition},
                     {"setting_tags", c.setting_tags},
                     {"rank", c.rank},
                     {"recall", c.recall},
                     {"ndcg", c.ndcg}});
  }
  return {{"format_version", 1},
          {"dataset", r.dataset},
          {"scheme", r.scheme},
          {"model", r.model},
          {"setting", r.setting},
          {"K", r.k},
          {"partitions", parts},
          {"excluded_cold_context", r.excluded_cold_context},
          {"excluded_cold_target", r.excluded_cold_target},
          {"pairing_unit", r.pairing_unit},
          {"config_digest", r.config_digest},
          {"cases", cases}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.dataset = j.value("dataset", "");
    r.scheme = j.at("scheme").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.setting = j.at("setting").get<std::string>();
    r.k = j.at("K").get<int>();
    for (const auto& [name, st] : j.at("partitions").items()) {
      r.partitions[name] = {st.at("n").get<std::size_t>(), opt_from(st.at("recall")), opt_from(st.at("ndcg"))};
    }
    r.excluded_cold_context = j.value("excluded_cold_context", std::size_t{0});
    r.excluded_cold_target = j.value("excluded_cold_target", std::size_t{0});
    r.pairing_unit = j.value("pairing_unit", "case");
    r.config_digest = j.value("config_digest", "");
    for (const auto& cj : j.at("cases")) {
      CaseScore c;
      c.case_id = cj.at("case_id").get<std::size_t>();
      c.partition = cj.at("partition").get<std::string>();
      c.setting_tags = cj.at("setting_tags").get<std::set<std::string>>();
      c.rank = cj.at("rank").get<std::size_t>();
      c.recall = cj.at("recall").get<int>();
      c.ndcg = cj.at("ndcg").get<double>();
      r.cases.push_back(std::move(c));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("report", 0, e.what());
  }
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::string out = "scheme,model,setting,partition,metric,K,value,n\n";
  for (const auto& r : reports) {
    for (const auto& [name, st] : r.partitions) {
      for (const auto& [metric, v] : {std::pair{"recall", st.recall}, std::pair{"ndcg", st.ndcg}}) {
        out += r.scheme + "," + r.model + "," + r.setting + "," + name + "," + metric + "," + std::to_string(r.k) +
               "," + (v ? format_double(*v) : std::string()) + "," + std::to_string(st.n) + "\n";
      }
    }
  }
  return out;
}

std::string report_digest(const EvalReport& report) { return sha256_hex(report_to_json(report).dump()); }

}  // namespace coldgen
