#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coldgen/decode.hpp"
#include "coldgen/identifiers.hpp"
#include "coldgen/model.hpp"
#include "coldgen/protocol.hpp"

namespace coldgen {

/// 1-based rank of `target` in `ranked`, 0 when absent.
std::size_t rank_of(const RankedList& ranked, const ItemId& target);

/// 1 iff the target is at rank <= k.
int recall_at_k(const RankedList& ranked, const ItemId& target, int k);

/// Single-target NDCG: 1 / log2(rank + 1) for rank <= k, else 0.
double ndcg_at_k(const RankedList& ranked, const ItemId& target, int k);

enum class Protocol { kItemCold, kUserCold };
std::string to_string(Protocol protocol);
Protocol protocol_from_string(const std::string& s);

namespace partitions {
inline constexpr const char* kWarmTest = "warm_test";
inline constexpr const char* kColdTest = "cold_test";
}  // namespace partitions

struct CaseScore {
  std::size_t case_id = 0;
  std::string partition;
  std::set<std::string> setting_tags;
  std::size_t rank = 0;  // 0 = not retrieved
  int recall = 0;
  double ndcg = 0.0;
};

struct PartitionStats {
  std::size_t n = 0;
  std::optional<double> recall;  // null when n = 0
  std::optional<double> ndcg;
};

struct EvalReport {
  std::string dataset;
  std::string scheme;
  std::string model;
  std::string setting;
  int k = 10;
  std::map<std::string, PartitionStats> partitions;
  /// Cold-user cases left out because their context holds cold items.
  std::size_t excluded_cold_context = 0;
  /// Test cases left out because their target is not in the candidate set.
  std::size_t excluded_cold_target = 0;
  std::string pairing_unit = "case";
  std::string config_digest;
  std::vector<CaseScore> cases;
};

struct EvalOptions {
  Protocol protocol = Protocol::kItemCold;
  int k = 10;
  BeamOptions beam;
  /// Item protocol only: leave cold items out of the candidate trie.
  bool exclude_cold_items = false;
  /// 0 = full context.
  int max_context_items = 0;
  /// Ranked lists are appended here as CSV when set.
  std::ostream* ranked_csv = nullptr;
};

/// Scores the test split under one protocol. Item protocol: warm users'
/// cases over a trie of warm and cold items, partitioned by target. User
/// protocol: cases with warm targets over a trie of warm items, partitioned
/// by user.
EvalReport evaluate(const SequenceModel& model, const SplitManifest& manifest, const IdentifierMap& id_map,
                    const EvalOptions& options);

/// Recomputes partition means from the per-case scores.
void aggregate(EvalReport& report);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
  double mean_diff = 0.0;
};

/// Paired two-sided t-test on a - b.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Student-t CDF.
double student_t_cdf(double t, double df);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// `scheme,model,setting,partition,metric,K,value,n` rows.
std::string report_csv(const std::vector<EvalReport>& reports);
std::string report_digest(const EvalReport& report);

}  // namespace coldgen
