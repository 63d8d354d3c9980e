#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coldgen/corpus.hpp"
#include "coldgen/eval.hpp"
#include "coldgen/identifiers.hpp"
#include "coldgen/protocol.hpp"
#include "coldgen/quantizer.hpp"
#include "coldgen/synthetic.hpp"
#include "coldgen/training.hpp"

namespace coldgen {

struct IdentifierConfig {
  int embedding_dim = 64;
  int levels = 3;           // rq levels, bkm depth
  int codes_per_level = 32;
  int subspaces = 4;        // opq
  int opq_outer_iters = 8;
  int kmeans_iters = 50;
  int max_words = 16;       // textual
};

struct ModelConfig {
  std::string kind = "recurrent";  // recurrent | markov
  int hidden = 64;
  int markov_order = 2;
  double markov_alpha = 0.1;
};

struct EvalConfig {
  int k = 10;
  int beam_width = 0;
  bool length_normalize = false;
  /// Leave cold items out of the item-cold candidate set.
  bool exclude_cold_items = false;
  std::vector<Protocol> protocols{Protocol::kItemCold, Protocol::kUserCold};
  bool dump_rankings = false;
};

/// One end-to-end experiment. `seed` is the only seed: every stage derives
/// its own seed from it.
struct ExperimentConfig {
  std::string dataset = "synthetic";
  std::string interactions_path;
  std::string items_path;
  /// Used when no input paths are given.
  SynthConfig synth;
  ProtocolConfig protocol;
  Scheme scheme = Scheme::kRq;
  IdentifierConfig identifiers;
  ModelConfig model;
  TrainConfig train;
  /// Context cap in items for training and evaluation (0 = full history).
  int max_context_items = 0;
  EvalConfig eval;
  std::uint64_t seed = 0;
};

void validate(const ExperimentConfig& config);
nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys are errors.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
std::string config_digest(const ExperimentConfig& config);

/// Run-root directory from COLDGEN_RUN_ROOT, defaulting to ./runs.
std::filesystem::path run_root();

struct Corpus {
  InteractionLog raw;
  InteractionLog log;  // after k-core filtering
  ItemCatalog catalog;
  std::vector<ItemId> synthesized_meta;
};

struct Identifiers {
  IdentifierMap id_map;
  std::optional<Codebook> codebook;
  std::size_t cold_items_encoded = 0;
};

Corpus load_corpus(const ExperimentConfig& config);
SplitManifest make_split(const ExperimentConfig& config, const Corpus& corpus);
Identifiers build_identifiers(const ExperimentConfig& config, const Corpus& corpus, const SplitManifest& manifest);

struct TrainedModel {
  std::unique_ptr<SequenceModel> model;
  std::vector<double> loss_trace;
  std::vector<double> reward_trace;
};

TrainedModel train_model(const ExperimentConfig& config, const Corpus& corpus, const SplitManifest& manifest,
                         const Identifiers& ids);

std::vector<EvalReport> evaluate_all(const ExperimentConfig& config, const SequenceModel& model,
                                     const SplitManifest& manifest, const Identifiers& ids,
                                     const std::filesystem::path& rankings_dir = {});

enum class Stage { kIngest, kSplit, kEncode, kTrain, kEval };
std::string to_string(Stage stage);

struct RunOptions {
  std::filesystem::path root;  // empty = run_root()
  Stage until = Stage::kEval;
  /// Recompute every stage even when artifacts exist.
  bool force = false;
  bool verbose = false;
};

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::string config_digest;
  std::vector<EvalReport> reports;
};

/// ingest -> filter -> split -> encode -> train -> evaluate, writing every
/// artifact under <root>/<config digest>/. Existing stage artifacts are
/// reused. Errors are rethrown prefixed with the failing stage.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Dataset statistics rows (name, value).
std::vector<std::pair<std::string, std::string>> corpus_statistics(const Corpus& corpus,
                                                                   const SplitManifest& manifest);

struct SweepSpec {
  std::vector<Scheme> schemes;
  std::vector<int> widths;
  std::vector<std::uint64_t> seeds;
  std::vector<int> rl_iters;  // training-strategy axis; 0 = SFT only
};

nlohmann::json to_json(const SweepSpec& spec);
SweepSpec sweep_spec_from_json(const nlohmann::json& j);

/// Cartesian product of the axes over `base`; empty axes keep the base value.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, const SweepSpec& spec);

/// Runs every expanded config and returns all reports.
std::vector<EvalReport> run_sweep(const ExperimentConfig& base, const SweepSpec& spec, const RunOptions& options);

/// Writes reports.csv, summary.json and one grouped-bar SVG per
/// (dataset, setting). Returns the written paths.
std::vector<std::filesystem::path> emit_report(const std::vector<EvalReport>& reports,
                                               const std::filesystem::path& out_dir);

/// Parses reports.csv back into (scheme, model, setting, partition, metric,
/// K, value, n) rows.
struct ReportRow {
  std::string scheme, model, setting, partition, metric;
  int k = 0;
  std::optional<double> value;
  std::size_t n = 0;
};
std::vector<ReportRow> parse_report_csv(const std::string& text);

}  // namespace coldgen
