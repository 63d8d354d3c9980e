#include "coldgen/harness.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include <nlohmann/json.hpp>

#include "coldgen/checkpoint.hpp"
#include "coldgen/markov.hpp"
#include "coldgen/recurrent.hpp"

namespace coldgen {

namespace {

constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError(std::string("config section '") + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(std::string("unknown config key '") + key + "' in '" + section + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void validate(const ExperimentConfig& c) {
  auto in01 = [](double x) { return x > 0.0 && x < 1.0; };
  if (!in01(c.protocol.train_fraction)) throw ValidationError("train_fraction must lie in (0, 1)");
  if (!in01(c.protocol.user_fraction)) throw ValidationError("user_fraction must lie in (0, 1)");
  if (c.protocol.k_core < 1) throw ValidationError("k_core must be >= 1");
  if (c.interactions_path.empty() != c.items_path.empty()) {
    throw ValidationError("interactions and items paths must be given together");
  }
  for (const auto& p : {c.interactions_path, c.items_path}) {
    if (!p.empty() && !std::filesystem::exists(p)) throw ValidationError("input file not found: " + p);
  }
  if (c.interactions_path.empty()) validate(c.synth);
  const auto& id = c.identifiers;
  if (id.embedding_dim < 8) throw ValidationError("embedding_dim must be >= 8");
  if (id.levels < 1 || id.codes_per_level < 2) throw ValidationError("levels >= 1 and codes_per_level >= 2 required");
  if (id.subspaces < 1 || id.embedding_dim % id.subspaces != 0) {
    throw ValidationError("subspaces must divide embedding_dim");
  }
  if (id.opq_outer_iters < 1 || id.kmeans_iters < 1 || id.max_words < 1) {
    throw ValidationError("iteration counts and max_words must be positive");
  }
  if (c.model.kind != "recurrent" && c.model.kind != "markov") {
    throw ValidationError("model kind must be 'recurrent' or 'markov'");
  }
  if (c.model.kind == "recurrent" && c.model.hidden < 4) throw ValidationError("hidden width must be >= 4");
  if (c.model.kind == "markov" && (c.model.markov_order < 1 || !(c.model.markov_alpha > 0.0))) {
    throw ValidationError("markov order >= 1 and alpha > 0 required");
  }
  validate(c.train);
  if (c.max_context_items < 0) throw ValidationError("max_context_items must be >= 0");
  if (c.eval.k < 1) throw ValidationError("K must be >= 1");
  if (c.eval.beam_width != 0 && c.eval.beam_width < c.eval.k) throw ValidationError("beam_width must be >= K");
  if (c.eval.protocols.empty()) throw ValidationError("at least one evaluation protocol is required");
}

json to_json(const ExperimentConfig& c) {
  json synth = to_json(c.synth);
  synth.erase("seed");
  json protocols = json::array();
  for (auto p : c.eval.protocols) protocols.push_back(to_string(p));
  return {{"dataset", c.dataset},
          {"interactions", c.interactions_path},
          {"items", c.items_path},
          {"synth", synth},
          {"protocol",
           {{"train_fraction", c.protocol.train_fraction},
            {"user_fraction", c.protocol.user_fraction},
            {"val_fraction_of_holdout", c.protocol.val_fraction_of_holdout},
            {"cold_context_min", c.protocol.cold_context_min},
            {"cold_context_max", c.protocol.cold_context_max},
            {"max_warm_context", c.protocol.max_warm_context},
            {"k_core", c.protocol.k_core}}},
          {"scheme", to_string(c.scheme)},
          {"identifiers",
           {{"embedding_dim", c.identifiers.embedding_dim},
            {"levels", c.identifiers.levels},
            {"codes_per_level", c.identifiers.codes_per_level},
            {"subspaces", c.identifiers.subspaces},
            {"opq_outer_iters", c.identifiers.opq_outer_iters},
            {"kmeans_iters", c.identifiers.kmeans_iters},
            {"max_words", c.identifiers.max_words}}},
          {"model",
           {{"kind", c.model.kind},
            {"hidden", c.model.hidden},
            {"markov_order", c.model.markov_order},
            {"markov_alpha", c.model.markov_alpha}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.learning_rate},
            {"clip_norm", c.train.clip_norm},
            {"rl_iters", c.train.rl_iters},
            {"rl_samples_per_context", c.train.rl_samples_per_context},
            {"rl_contexts_per_iter", c.train.rl_contexts_per_iter},
            {"rl_learning_rate", c.train.rl_learning_rate},
            {"reward_k", c.train.reward_k}}},
          {"max_context_items", c.max_context_items},
          {"eval",
           {{"K", c.eval.k},
            {"beam_width", c.eval.beam_width},
            {"length_normalize", c.eval.length_normalize},
            {"exclude_cold_items", c.eval.exclude_cold_items},
            {"protocols", protocols},
            {"dump_rankings", c.eval.dump_rankings}}},
          {"seed", c.seed}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j, "config",
               {"dataset", "interactions", "items", "synth", "protocol", "scheme", "identifiers", "model", "train",
                "max_context_items", "eval", "seed"});
    read(j, "dataset", c.dataset);
    read(j, "interactions", c.interactions_path);
    read(j, "items", c.items_path);
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      check_keys(s, "synth",
                 {"n_users", "n_items", "latent_dim", "interactions_per_user", "content_signal",
                  "cold_item_fraction", "title_vocab_size", "preference_strength", "popularity_spread"});
      c.synth = synth_config_from_json(s);
    }
    if (j.contains("protocol")) {
      const auto& p = j.at("protocol");
      check_keys(p, "protocol",
                 {"train_fraction", "user_fraction", "val_fraction_of_holdout", "cold_context_min",
                  "cold_context_max", "max_warm_context", "k_core"});
      read(p, "train_fraction", c.protocol.train_fraction);
      read(p, "user_fraction", c.protocol.user_fraction);
      read(p, "val_fraction_of_holdout", c.protocol.val_fraction_of_holdout);
      read(p, "cold_context_min", c.protocol.cold_context_min);
      read(p, "cold_context_max", c.protocol.cold_context_max);
      read(p, "max_warm_context", c.protocol.max_warm_context);
      read(p, "k_core", c.protocol.k_core);
    }
    if (j.contains("scheme")) c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    if (j.contains("identifiers")) {
      const auto& i = j.at("identifiers");
      check_keys(i, "identifiers",
                 {"embedding_dim", "levels", "codes_per_level", "subspaces", "opq_outer_iters", "kmeans_iters",
                  "max_words"});
      read(i, "embedding_dim", c.identifiers.embedding_dim);
      read(i, "levels", c.identifiers.levels);
      read(i, "codes_per_level", c.identifiers.codes_per_level);
      read(i, "subspaces", c.identifiers.subspaces);
      read(i, "opq_outer_iters", c.identifiers.opq_outer_iters);
      read(i, "kmeans_iters", c.identifiers.kmeans_iters);
      read(i, "max_words", c.identifiers.max_words);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, "model", {"kind", "hidden", "markov_order", "markov_alpha"});
      read(m, "kind", c.model.kind);
      read(m, "hidden", c.model.hidden);
      read(m, "markov_order", c.model.markov_order);
      read(m, "markov_alpha", c.model.markov_alpha);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t, "train",
                 {"epochs", "batch_size", "learning_rate", "clip_norm", "rl_iters", "rl_samples_per_context",
                  "rl_contexts_per_iter", "rl_learning_rate", "reward_k"});
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "clip_norm", c.train.clip_norm);
      read(t, "rl_iters", c.train.rl_iters);
      read(t, "rl_samples_per_context", c.train.rl_samples_per_context);
      read(t, "rl_contexts_per_iter", c.train.rl_contexts_per_iter);
      read(t, "rl_learning_rate", c.train.rl_learning_rate);
      read(t, "reward_k", c.train.reward_k);
    }
    read(j, "max_context_items", c.max_context_items);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      check_keys(e, "eval",
                 {"K", "beam_width", "length_normalize", "exclude_cold_items", "protocols", "dump_rankings"});
      read(e, "K", c.eval.k);
      read(e, "beam_width", c.eval.beam_width);
      read(e, "length_normalize", c.eval.length_normalize);
      read(e, "exclude_cold_items", c.eval.exclude_cold_items);
      read(e, "dump_rankings", c.eval.dump_rankings);
      if (e.contains("protocols")) {
        c.eval.protocols.clear();
        for (const auto& p : e.at("protocols")) c.eval.protocols.push_back(protocol_from_string(p.get<std::string>()));
      }
    }
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
  return c;
}

std::string config_digest(const ExperimentConfig& config) {
  std::string material = std::string(kVersion) + "\n" + to_json(config).dump();
  for (const auto& p : {config.interactions_path, config.items_path}) {
    if (!p.empty() && std::filesystem::exists(p)) material += "\n" + sha256_hex(read_file(p));
  }
  return sha256_hex(material).substr(0, 16);
}

std::filesystem::path run_root() {
  const char* env = std::getenv("COLDGEN_RUN_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("runs");
}

namespace {

std::uint64_t stage_seed(const ExperimentConfig& c, const char* label) { return derive_seed(c.seed, label); }

}  // namespace

Corpus load_corpus(const ExperimentConfig& config) {
  Corpus corpus;
  if (config.interactions_path.empty()) {
    SynthConfig sc = config.synth;
    sc.seed = stage_seed(config, "synth");
    SynthCorpus synth = generate_synthetic(sc);
    corpus.raw = std::move(synth.log);
    corpus.catalog = std::move(synth.catalog);
  } else {
    corpus.raw = load_interactions(config.interactions_path);
    corpus.catalog = load_item_metadata(config.items_path);
  }
  corpus.synthesized_meta = complete_catalog(corpus.catalog, corpus.raw);
  corpus.log = k_core_filter(corpus.raw, config.protocol.k_core);
  if (corpus.log.empty()) throw ValidationError("k-core filtering removed every interaction");
  return corpus;
}

SplitManifest make_split(const ExperimentConfig& config, const Corpus& corpus) {
  ProtocolConfig pc = config.protocol;
  pc.seed = stage_seed(config, "protocol");
  return build_manifest(corpus.log, pc);
}

Identifiers build_identifiers(const ExperimentConfig& config, const Corpus& corpus, const SplitManifest& manifest) {
  std::vector<ItemId> warm(manifest.warm_items.begin(), manifest.warm_items.end());
  std::vector<ItemId> cold(manifest.cold_items.begin(), manifest.cold_items.end());
  if (warm.empty()) throw ValidationError("no warm items to build identifiers from");
  Identifiers ids;
  ids.cold_items_encoded = cold.size();
  const auto& ic = config.identifiers;
  switch (config.scheme) {
    case Scheme::kAtomic:
      ids.id_map = assign_atomic(warm);
      extend_atomic(ids.id_map, cold);
      return ids;
    case Scheme::kTextual:
      ids.id_map = assign_textual(corpus.catalog, warm, ic.max_words);
      extend_textual(ids.id_map, corpus.catalog, cold, ic.max_words);
      return ids;
    default:
      break;
  }
  const auto embed_seed = stage_seed(config, "embedding");
  auto embed = [&](const ItemId& item) { return content_embedding(corpus.catalog.at(item), ic.embedding_dim, embed_seed); };
  std::vector<ContentEmbedding> warm_emb;
  Matrix points(static_cast<Eigen::Index>(warm.size()), ic.embedding_dim);
  for (std::size_t i = 0; i < warm.size(); ++i) {
    warm_emb.push_back(embed(warm[i]));
    points.row(static_cast<Eigen::Index>(i)) = warm_emb.back().vector.transpose();
  }
  const auto cb_seed = stage_seed(config, "codebook");
  KMeansOptions km;
  km.max_iter = ic.kmeans_iters;
  if (config.scheme == Scheme::kRq) {
    ids.codebook = train_rq(points, ic.levels, ic.codes_per_level, cb_seed, km);
  } else if (config.scheme == Scheme::kBkm) {
    ids.codebook = train_bkm(points, ic.levels, ic.codes_per_level, cb_seed);
  } else {
    ids.codebook = train_opq(points, ic.subspaces, ic.codes_per_level, cb_seed, ic.opq_outer_iters, km);
  }
  ids.id_map = encode_items(*ids.codebook, warm_emb);
  for (const auto& item : cold) encode_cold_item(ids.id_map, *ids.codebook, embed(item));
  return ids;
}

TrainedModel train_model(const ExperimentConfig& config, const Corpus& corpus, const SplitManifest& manifest,
                         const Identifiers& ids) {
  const auto examples = make_training_examples(manifest, corpus.log, ids.id_map, config.max_context_items);
  if (examples.empty()) throw ValidationError("no training examples: every warm user has a single train event");
  const int vocab = static_cast<int>(ids.id_map.vocab_size());
  TrainedModel out;
  if (config.model.kind == "markov") {
    std::vector<std::vector<TokenId>> seqs;
    for (auto& c : pack_examples(examples)) {
      c.tokens.push_back(IdentifierMap::kEos);
      seqs.push_back(std::move(c.tokens));
    }
    out.model = std::make_unique<MarkovModel>(
        fit_markov(seqs, static_cast<std::size_t>(vocab), config.model.markov_order, config.model.markov_alpha));
    return out;
  }
  auto model = std::make_unique<RecurrentModel>(
      init_recurrent(vocab, config.model.hidden, stage_seed(config, "model/init")));
  TrainConfig tc = config.train;
  tc.seed = stage_seed(config, "train");
  out.loss_trace = sft_train(*model, examples, tc).loss_trace;
  if (tc.rl_iters > 0) {
    std::vector<ItemId> warm(manifest.warm_items.begin(), manifest.warm_items.end());
    IdTrie trie = build_trie(ids.id_map, warm);
    std::vector<RlCase> cases;
    for (const auto& ex : examples) {
      auto item = resolve(trie, ex.target);
      if (item) cases.push_back({ex.context, *item});
    }
    out.reward_trace = rl_finetune(*model, cases, trie, tc).reward_trace;
  }
  out.model = std::move(model);
  return out;
}

std::vector<EvalReport> evaluate_all(const ExperimentConfig& config, const SequenceModel& model,
                                     const SplitManifest& manifest, const Identifiers& ids,
                                     const std::filesystem::path& rankings_dir) {
  std::vector<EvalReport> reports;
  for (auto protocol : config.eval.protocols) {
    EvalOptions opt;
    opt.protocol = protocol;
    opt.k = config.eval.k;
    opt.beam.beam_width = config.eval.beam_width;
    opt.beam.length_normalize = config.eval.length_normalize;
    opt.exclude_cold_items = config.eval.exclude_cold_items;
    opt.max_context_items = config.max_context_items;
    std::ofstream rankings;
    if (config.eval.dump_rankings && !rankings_dir.empty()) {
      std::filesystem::create_directories(rankings_dir);
      rankings.open(rankings_dir / ("rankings_" + to_string(protocol) + ".csv"));
      opt.ranked_csv = &rankings;
    }
    EvalReport r = evaluate(model, manifest, ids.id_map, opt);
    r.dataset = config.dataset;
    r.config_digest = config_digest(config);
    reports.push_back(std::move(r));
  }
  return reports;
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kSplit: return "split";
    case Stage::kEncode: return "encode";
    case Stage::kTrain: return "train";
    case Stage::kEval: return "eval";
  }
  return "eval";
}

std::vector<std::pair<std::string, std::string>> corpus_statistics(const Corpus& corpus,
                                                                   const SplitManifest& manifest) {
  std::vector<std::pair<std::string, std::string>> rows;
  auto add = [&](const char* name, auto v) {
    if constexpr (std::is_floating_point_v<decltype(v)>) {
      rows.emplace_back(name, format_double(v));
    } else {
      rows.emplace_back(name, std::to_string(v));
    }
  };
  add("raw_interactions", corpus.raw.size());
  add("raw_users", corpus.raw.num_users());
  add("raw_items", corpus.raw.num_items());
  add("synthesized_metadata", corpus.synthesized_meta.size());
  add("k_core", manifest.k_core);
  add("interactions", corpus.log.size());
  add("users", corpus.log.num_users());
  add("items", corpus.log.num_items());
  add("density", static_cast<double>(corpus.log.size()) /
                     (static_cast<double>(corpus.log.num_users()) * static_cast<double>(corpus.log.num_items())));
  add("boundary_timestamp", manifest.boundary_timestamp);
  add("train_interactions", manifest.train_interactions.size());
  add("warm_items", manifest.warm_items.size());
  add("cold_items", manifest.cold_items.size());
  add("warm_users", manifest.warm_users.size());
  add("cold_users", manifest.cold_users.size());
  std::size_t val = 0, test = 0, test_cold_item = 0, test_cold_user = 0, cold_ctx = 0;
  for (const auto& c : manifest.eval_cases) {
    if (c.split == CaseSplit::kValidation) {
      ++val;
      continue;
    }
    ++test;
    test_cold_item += c.has_tag(tags::kColdItem);
    test_cold_user += c.has_tag(tags::kColdUser);
    cold_ctx += c.has_tag(tags::kColdUser) && c.context_has_cold_items;
  }
  add("validation_cases", val);
  add("test_cases", test);
  add("test_cases_cold_item", test_cold_item);
  add("test_cases_cold_user", test_cold_user);
  add("test_cases_cold_user_with_cold_context", cold_ctx);
  return rows;
}

namespace {

// Write-then-rename so an interrupted run never leaves a truncated artifact.
void write_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, content);
  std::filesystem::rename(tmp, path);
}

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  const std::string prefix = std::string("[") + stage + "] ";
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const ParseError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

class Timer {
 public:
  Timer(bool verbose, std::string label) : verbose_(verbose), label_(std::move(label)) {}
  ~Timer() {
    if (!verbose_) return;
    auto s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::cerr << "  " << label_ << ": " << s << " s\n";
  }

 private:
  bool verbose_;
  std::string label_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json provenance(const ExperimentConfig& c, const std::string& digest) {
  json inputs = json::object();
  for (const auto& [name, p] : {std::pair{"interactions", c.interactions_path}, std::pair{"items", c.items_path}}) {
    if (!p.empty()) inputs[name] = sha256_hex(read_file(p));
  }
  return {{"config", to_json(c)},
          {"config_digest", digest},
          {"coldgen_version", kVersion},
          {"inputs", inputs},
          {"seeds",
           {{"master", c.seed},
            {"synth", stage_seed(c, "synth")},
            {"protocol", stage_seed(c, "protocol")},
            {"embedding", stage_seed(c, "embedding")},
            {"codebook", stage_seed(c, "codebook")},
            {"model_init", stage_seed(c, "model/init")},
            {"train", stage_seed(c, "train")}}},
          {"stage_versions",
           {{"ingest", 1}, {"split", 1}, {"encode", 1}, {"train", 1}, {"eval", 1}}},
          {"rl_note", "REINFORCE with per-context mean baseline; reward from the target's rank among samples"},
          {"t_test_pairing", "case"}};
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  staged("config", [&] { validate(config); });
  ExperimentResult result;
  result.config_digest = config_digest(config);
  const auto root = options.root.empty() ? run_root() : options.root;
  result.run_dir = root / result.config_digest;
  const auto& dir = result.run_dir;
  std::filesystem::create_directories(dir);
  write_atomic(dir / "provenance.json", provenance(config, result.config_digest).dump(1) + "\n");
  auto fresh = [&](const char* name) { return options.force || !std::filesystem::exists(dir / name); };
  if (options.verbose) std::cerr << "run " << dir.string() << "\n";

  Corpus corpus = staged("ingest", [&] {
    Timer t(options.verbose, "ingest");
    return load_corpus(config);
  });
  if (options.until == Stage::kIngest) return result;

  SplitManifest manifest = staged("split", [&] {
    Timer t(options.verbose, "split");
    SplitManifest m;
    if (fresh("manifest.json")) {
      m = make_split(config, corpus);
      write_atomic(dir / "manifest.json", manifest_dump(m) + "\n");
    } else {
      m = manifest_from_json(json::parse(read_file(dir / "manifest.json")));
    }
    auto violations = validate_manifest(m, corpus.log);
    if (!violations.empty()) {
      throw ValidationError("manifest violates " + violations.front().code + ": " + violations.front().message);
    }
    std::string stats = "statistic,value\n";
    for (const auto& [k, v] : corpus_statistics(corpus, m)) stats += k + "," + v + "\n";
    write_atomic(dir / "stats.csv", stats);
    return m;
  });
  if (options.until == Stage::kSplit) return result;

  Identifiers ids = staged("encode", [&] {
    Timer t(options.verbose, "encode");
    Identifiers out;
    if (fresh("idmap.json")) {
      out = build_identifiers(config, corpus, manifest);
      if (out.codebook) write_atomic(dir / "codebook.json", codebook_to_json(*out.codebook).dump() + "\n");
      write_atomic(dir / "idmap.json", identifier_map_to_json(out.id_map).dump() + "\n");
    } else {
      out.id_map = identifier_map_from_json(json::parse(read_file(dir / "idmap.json")));
      if (std::filesystem::exists(dir / "codebook.json")) {
        out.codebook = codebook_from_json(json::parse(read_file(dir / "codebook.json")));
      }
      out.cold_items_encoded = manifest.cold_items.size();
    }
    return out;
  });
  if (options.until == Stage::kEncode) return result;

  std::unique_ptr<SequenceModel> model = staged("train", [&] {
    Timer t(options.verbose, "train");
    if (!fresh("checkpoint.json")) return load_checkpoint(dir / "checkpoint");
    TrainedModel tm = train_model(config, corpus, manifest, ids);
    if (!tm.loss_trace.empty()) write_loss_trace(dir / "loss_trace.csv", tm.loss_trace);
    if (!tm.reward_trace.empty()) write_reward_trace(dir / "reward_trace.csv", tm.reward_trace);
    save_checkpoint(*tm.model, dir / "checkpoint");
    return std::move(tm.model);
  });
  if (options.until == Stage::kTrain) return result;

  result.reports = staged("eval", [&] {
    Timer t(options.verbose, "eval");
    std::vector<EvalReport> reports;
    bool cached = !options.force;
    for (auto p : config.eval.protocols) cached = cached && std::filesystem::exists(dir / ("report_" + to_string(p) + ".json"));
    if (cached) {
      for (auto p : config.eval.protocols) {
        reports.push_back(report_from_json(json::parse(read_file(dir / ("report_" + to_string(p) + ".json")))));
      }
      return reports;
    }
    reports = evaluate_all(config, *model, manifest, ids, dir);
    for (const auto& r : reports) write_atomic(dir / ("report_" + r.setting + ".json"), report_to_json(r).dump() + "\n");
    emit_report(reports, dir / "report");
    return reports;
  });
  return result;
}

json to_json(const SweepSpec& spec) {
  json schemes = json::array();
  for (auto s : spec.schemes) schemes.push_back(to_string(s));
  return {{"schemes", schemes}, {"widths", spec.widths}, {"seeds", spec.seeds}, {"rl_iters", spec.rl_iters}};
}

SweepSpec sweep_spec_from_json(const json& j) {
  SweepSpec s;
  try {
    check_keys(j, "sweep", {"schemes", "widths", "seeds", "rl_iters"});
    if (j.contains("schemes")) {
      for (const auto& x : j.at("schemes")) s.schemes.push_back(scheme_from_string(x.get<std::string>()));
    }
    read(j, "widths", s.widths);
    read(j, "seeds", s.seeds);
    read(j, "rl_iters", s.rl_iters);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid sweep spec: ") + e.what());
  }
  return s;
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, const SweepSpec& spec) {
  auto schemes = spec.schemes.empty() ? std::vector<Scheme>{base.scheme} : spec.schemes;
  auto widths = spec.widths.empty() ? std::vector<int>{base.model.hidden} : spec.widths;
  auto seeds = spec.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : spec.seeds;
  auto rl = spec.rl_iters.empty() ? std::vector<int>{base.train.rl_iters} : spec.rl_iters;
  std::vector<ExperimentConfig> out;
  for (auto seed : seeds) {
    for (auto scheme : schemes) {
      for (int w : widths) {
        for (int r : rl) {
          ExperimentConfig c = base;
          c.seed = seed;
          c.scheme = scheme;
          c.model.hidden = w;
          c.train.rl_iters = r;
          out.push_back(std::move(c));
        }
      }
    }
  }
  return out;
}

std::vector<EvalReport> run_sweep(const ExperimentConfig& base, const SweepSpec& spec, const RunOptions& options) {
  std::vector<EvalReport> all;
  for (const auto& c : expand_sweep(base, spec)) {
    auto r = run_experiment(c, options);
    all.insert(all.end(), r.reports.begin(), r.reports.end());
  }
  return all;
}

}  // namespace coldgen
