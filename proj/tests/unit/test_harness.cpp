#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <map>

#include <nlohmann/json.hpp>

#include "coldgen/harness.hpp"

using namespace coldgen;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.synth.n_users = 150;
  c.synth.n_items = 80;
  c.synth.latent_dim = 4;
  c.synth.cold_item_fraction = 0.1;
  c.synth.title_vocab_size = 60;
  c.identifiers.codes_per_level = 4;
  c.identifiers.levels = 2;
  c.model.hidden = 8;
  c.train.epochs = 2;
  c.eval.k = 5;
  c.seed = 3;
  return c;
}

fs::path scratch(const std::string& name) {
  fs::path p = run_root() / "harness_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// file name -> SHA-256 of its content, over a whole run directory.
std::map<std::string, std::string> dir_digest(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = sha256_hex(read_file(e.path()));
  }
  return out;
}

std::string error_of(const ExperimentConfig& c, const fs::path& root) {
  try {
    run_experiment(c, {.root = root});
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config JSON round-trip and strict keys") {
  ExperimentConfig c = tiny_config();
  c.scheme = Scheme::kOpq;
  c.model.kind = "markov";
  c.train.clip_norm = 0.25;
  c.eval.protocols = {Protocol::kUserCold};
  const auto j = to_json(c);
  CHECK(to_json(experiment_config_from_json(j)) == j);
  CHECK(config_digest(experiment_config_from_json(j)) == config_digest(c));

  auto defaults = experiment_config_from_json(nlohmann::json::object());
  CHECK(to_json(defaults) == to_json(ExperimentConfig{}));
  CHECK(defaults.protocol.train_fraction == 0.9);
  CHECK(defaults.protocol.user_fraction == 0.1);
  CHECK(defaults.eval.k == 10);

  CHECK_THROWS_AS(experiment_config_from_json({{"bogus", 1}}), ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json({{"train", {{"epochs", 2}, {"momentum", 0.9}}}}), ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json({{"train", {{"epochs", "two"}}}}), ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json({{"scheme", "hashing"}}), ValidationError);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.protocol.train_fraction = 1.0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = tiny_config();
  c.identifiers.subspaces = 5;
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = tiny_config();
  c.interactions_path = "/nonexistent/interactions.tsv";
  c.items_path = "/nonexistent/items.jsonl";
  CHECK_THROWS_AS(validate(c), ValidationError);
  c = tiny_config();
  c.eval.beam_width = 2;
  CHECK_THROWS_AS(validate(c), ValidationError);
  CHECK_NOTHROW(validate(tiny_config()));
}

TEST_CASE("run root comes from COLDGEN_RUN_ROOT") {
  const char* old = std::getenv("COLDGEN_RUN_ROOT");
  const std::string saved = old ? old : "";
  setenv("COLDGEN_RUN_ROOT", "/tmp/some_root", 1);
  CHECK(run_root() == fs::path("/tmp/some_root"));
  unsetenv("COLDGEN_RUN_ROOT");
  CHECK(run_root() == fs::path("runs"));
  if (old) setenv("COLDGEN_RUN_ROOT", saved.c_str(), 1);
}

TEST_CASE("run_experiment is deterministic and writes every artifact") {
  const auto c = tiny_config();
  auto a = run_experiment(c, {.root = scratch("det_a")});
  auto b = run_experiment(c, {.root = scratch("det_b")});
  REQUIRE(a.reports.size() == 2);
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    CHECK(report_digest(a.reports[i]) == report_digest(b.reports[i]));
  }
  CHECK(a.run_dir.filename().string() == config_digest(c));
  CHECK(dir_digest(a.run_dir) == dir_digest(b.run_dir));
  for (const char* f : {"provenance.json", "manifest.json", "stats.csv", "codebook.json", "idmap.json",
                        "checkpoint.json", "loss_trace.csv", "report_item_cold.json", "report_user_cold.json",
                        "report/reports.csv", "report/summary.json"}) {
    CHECK_MESSAGE(fs::exists(a.run_dir / f), f);
  }
  auto prov = nlohmann::json::parse(read_file(a.run_dir / "provenance.json"));
  CHECK(prov["config_digest"] == config_digest(c));
  CHECK(prov.contains("seeds"));
  CHECK(prov.contains("stage_versions"));
}

TEST_CASE("cached stages are reused, force recomputes identically") {
  const auto root = scratch("cache");
  const auto c = tiny_config();
  auto first = run_experiment(c, {.root = root});
  const auto stamp = fs::last_write_time(first.run_dir / "checkpoint.json");
  auto second = run_experiment(c, {.root = root});
  CHECK(fs::last_write_time(second.run_dir / "checkpoint.json") == stamp);
  CHECK(report_digest(second.reports[0]) == report_digest(first.reports[0]));
  auto forced = run_experiment(c, {.root = root, .force = true});
  CHECK(report_digest(forced.reports[0]) == report_digest(first.reports[0]));

  auto partial = run_experiment(c, {.root = scratch("partial"), .until = Stage::kSplit});
  CHECK(partial.reports.empty());
  CHECK(fs::exists(partial.run_dir / "manifest.json"));
  CHECK_FALSE(fs::exists(partial.run_dir / "idmap.json"));
}

TEST_CASE("stage errors carry their stage label") {
  const auto root = scratch("errors");
  auto c = tiny_config();
  c.protocol.k_core = 1000;
  const auto msg = error_of(c, root);
  CHECK(msg.rfind("[ingest]", 0) == 0);

  const auto dir = scratch("bad_input");
  write_file(dir / "interactions.tsv", "u1\ti1\t5\nu1\ti2\tnot-a-time\n");
  write_file(dir / "items.jsonl", "");
  c = tiny_config();
  c.interactions_path = (dir / "interactions.tsv").string();
  c.items_path = (dir / "items.jsonl").string();
  CHECK_THROWS_AS(run_experiment(c, {.root = root}), ValidationError);
  CHECK(error_of(c, root).rfind("[ingest]", 0) == 0);

  c = tiny_config();
  c.protocol.user_fraction = 0.0;
  CHECK(error_of(c, root).rfind("[config]", 0) == 0);
}

TEST_CASE("atomic cold items: zero recall when excluded, near zero when included") {
  auto c = tiny_config();
  c.scheme = Scheme::kAtomic;
  c.eval.protocols = {Protocol::kItemCold};
  c.eval.exclude_cold_items = true;
  auto excluded = run_experiment(c, {.root = scratch("atomic")});
  const auto& cold = excluded.reports[0].partitions.at("cold_test");
  REQUIRE(cold.n > 0);
  CHECK(*cold.recall == 0.0);
  c.eval.exclude_cold_items = false;
  auto included = run_experiment(c, {.root = scratch("atomic")});
  CHECK(*included.reports[0].partitions.at("cold_test").recall <= 0.05);
}

TEST_CASE("sweep expansion") {
  SweepSpec spec;
  spec.schemes = {Scheme::kRq, Scheme::kOpq};
  spec.widths = {16, 32, 64};
  spec.seeds = {1, 2};
  auto configs = expand_sweep(tiny_config(), spec);
  CHECK(configs.size() == 12);
  std::set<std::string> digests;
  for (const auto& c : configs) digests.insert(config_digest(c));
  CHECK(digests.size() == 12);
  CHECK(expand_sweep(tiny_config(), {}).size() == 1);

  auto j = to_json(spec);
  CHECK(to_json(sweep_spec_from_json(j)) == j);
  CHECK_THROWS_AS(sweep_spec_from_json({{"depths", {1}}}), ValidationError);
}

TEST_CASE("corpus statistics table") {
  const auto c = tiny_config();
  auto corpus = load_corpus(c);
  auto manifest = make_split(c, corpus);
  std::map<std::string, std::string> stats;
  for (auto& [k, v] : corpus_statistics(corpus, manifest)) stats[k] = v;
  CHECK(stats.at("interactions") == std::to_string(corpus.log.size()));
  CHECK(stats.at("cold_items") == std::to_string(manifest.cold_items.size()));
  CHECK(stats.at("cold_users") == std::to_string(manifest.cold_users.size()));
}
