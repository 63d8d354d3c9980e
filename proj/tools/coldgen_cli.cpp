// coldgen command-line driver.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "coldgen/harness.hpp"

namespace {

using namespace coldgen;
using json = nlohmann::json;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dataset, interactions, items, scheme, model;
  std::optional<int> hidden, epochs, batch_size, k, rl_iters, max_context;
  std::optional<double> learning_rate;
  std::optional<double> clip_norm;
  bool force = false;
  bool verbose = false;
};

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--dataset", o.dataset, "dataset label");
  app->add_option("--interactions", o.interactions, "interaction TSV (user, item, timestamp)");
  app->add_option("--items", o.items, "item metadata JSON lines");
  app->add_option("--scheme", o.scheme, "atomic | textual | rq | bkm | opq");
  app->add_option("--model", o.model, "recurrent | markov");
  app->add_option("--hidden", o.hidden, "recurrent hidden width");
  app->add_option("--epochs", o.epochs, "SFT epochs");
  app->add_option("--batch-size", o.batch_size, "chains per mini-batch");
  app->add_option("--lr", o.learning_rate, "SFT learning rate");
  app->add_option("--clip", o.clip_norm, "SFT gradient norm clip (0 = off)");
  app->add_option("--rl-iters", o.rl_iters, "RL iterations after SFT");
  app->add_option("--max-context", o.max_context, "context items kept (0 = all)");
  app->add_option("-k,--K", o.k, "cutoff for Recall/NDCG");
  app->add_flag("--force", o.force, "recompute cached stages");
  app->add_flag("-v,--verbose", o.verbose, "stage timings on stderr");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    json j;
    try {
      j = json::parse(read_file(o.config));
    } catch (const json::exception& e) {
      throw ValidationError("config " + o.config + ": " + e.what());
    }
    c = experiment_config_from_json(j);
  }
  if (o.seed) c.seed = *o.seed;
  if (o.dataset) c.dataset = *o.dataset;
  if (o.interactions) c.interactions_path = *o.interactions;
  if (o.items) c.items_path = *o.items;
  if (o.scheme) c.scheme = scheme_from_string(*o.scheme);
  if (o.model) c.model.kind = *o.model;
  if (o.hidden) c.model.hidden = *o.hidden;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
  if (o.clip_norm) c.train.clip_norm = *o.clip_norm;
  if (o.rl_iters) c.train.rl_iters = *o.rl_iters;
  if (o.max_context) c.max_context_items = *o.max_context;
  if (o.k) c.eval.k = *o.k;
  validate(c);
  return c;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Generative recommendation under cold-start: identifiers, training and evaluation"};
  app.require_subcommand(1);
  Overrides o;

  auto* ingest = app.add_subcommand("ingest", "load and k-core filter a corpus, print statistics");
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  auto* split = app.add_subcommand("split", "build and validate the split manifest");
  auto* encode = app.add_subcommand("encode", "build item identifiers");
  auto* train = app.add_subcommand("train", "train the sequence model");
  auto* eval = app.add_subcommand("eval", "evaluate and write reports");
  auto* sweep = app.add_subcommand("sweep", "run a scheme x width x strategy x seed sweep");
  auto* report = app.add_subcommand("report", "combine report JSON files into CSV, JSON and SVG");
  for (auto* sc : {ingest, split, encode, train, eval, sweep}) add_overrides(sc, o);

  SynthConfig sc;
  std::string out_dir;
  std::string synth_config;
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--config", synth_config, "JSON synth config")->check(CLI::ExistingFile);
  synth->add_option("--n-users", sc.n_users);
  synth->add_option("--n-items", sc.n_items);
  synth->add_option("--latent-dim", sc.latent_dim);
  synth->add_option("--content-signal", sc.content_signal);
  synth->add_option("--cold-item-fraction", sc.cold_item_fraction);
  synth->add_option("--seed", sc.seed);

  std::string sweep_file, schemes, widths, seeds, rl;
  sweep->add_option("--sweep", sweep_file, "JSON sweep spec")->check(CLI::ExistingFile);
  sweep->add_option("--schemes", schemes, "comma-separated schemes");
  sweep->add_option("--widths", widths, "comma-separated hidden widths");
  sweep->add_option("--seeds", seeds, "comma-separated seeds");
  sweep->add_option("--rl-values", rl, "comma-separated RL iteration counts");
  sweep->add_option("--out", out_dir, "combined report directory");

  std::vector<std::string> inputs;
  report->add_option("inputs", inputs, "report JSON files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (synth->parsed()) {
    if (!synth_config.empty()) {
      auto seed = sc.seed;
      sc = synth_config_from_json(json::parse(read_file(synth_config)));
      if (synth->count("--seed")) sc.seed = seed;
    }
    SynthCorpus corpus = generate_synthetic(sc);
    std::filesystem::path dir(out_dir);
    write_file(dir / "interactions.tsv", format_interactions(corpus.log));
    write_file(dir / "items.jsonl", format_item_metadata(corpus.catalog));
    std::string clusters = "item_id\tcluster\tlate\n";
    for (const auto& [item, c] : corpus.cluster) {
      clusters += item + "\t" + std::to_string(c) + "\t" + (corpus.late_items.contains(item) ? "1" : "0") + "\n";
    }
    write_file(dir / "clusters.tsv", clusters);
    write_file(dir / "synth_config.json", to_json(sc).dump(1) + "\n");
    std::cout << corpus.log.size() << " interactions, " << corpus.log.num_users() << " users, "
              << corpus.log.num_items() << " items -> " << dir.string() << "\n";
    return 0;
  }

  if (report->parsed()) {
    std::vector<EvalReport> reports;
    for (const auto& p : inputs) reports.push_back(report_from_json(json::parse(read_file(p))));
    for (const auto& p : emit_report(reports, out_dir)) std::cout << p.string() << "\n";
    return 0;
  }

  const ExperimentConfig cfg = resolve(o);
  RunOptions ro;
  ro.force = o.force;
  ro.verbose = o.verbose;

  if (ingest->parsed()) {
    Corpus corpus = load_corpus(cfg);
    std::cout << "statistic,value\n"
              << "raw_interactions," << corpus.raw.size() << "\nraw_users," << corpus.raw.num_users()
              << "\nraw_items," << corpus.raw.num_items() << "\nsynthesized_metadata," << corpus.synthesized_meta.size()
              << "\nk_core," << cfg.protocol.k_core << "\ninteractions," << corpus.log.size() << "\nusers,"
              << corpus.log.num_users() << "\nitems," << corpus.log.num_items() << "\n";
    return 0;
  }

  if (sweep->parsed()) {
    SweepSpec spec;
    if (!sweep_file.empty()) spec = sweep_spec_from_json(json::parse(read_file(sweep_file)));
    for (const auto& s : split_list(schemes)) spec.schemes.push_back(scheme_from_string(s));
    for (const auto& s : split_list(widths)) spec.widths.push_back(std::stoi(s));
    for (const auto& s : split_list(seeds)) spec.seeds.push_back(std::stoull(s));
    for (const auto& s : split_list(rl)) spec.rl_iters.push_back(std::stoi(s));
    auto reports = run_sweep(cfg, spec, ro);
    std::filesystem::path dir = out_dir.empty()
                                    ? run_root() / ("sweep-" + sha256_hex(to_json(cfg).dump() + to_json(spec).dump()).substr(0, 12))
                                    : std::filesystem::path(out_dir);
    emit_report(reports, dir);
    std::cout << report_csv(reports);
    std::cerr << "combined report: " << dir.string() << "\n";
    return 0;
  }

  if (split->parsed()) ro.until = Stage::kSplit;
  if (encode->parsed()) ro.until = Stage::kEncode;
  if (train->parsed()) ro.until = Stage::kTrain;
  auto result = run_experiment(cfg, ro);
  if (eval->parsed()) std::cout << report_csv(result.reports);
  std::cerr << "run directory: " << result.run_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const coldgen::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const coldgen::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "invalid JSON: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
