#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "coldgen/harness.hpp"

using namespace coldgen;
namespace fs = std::filesystem;

namespace {

EvalReport make_report(const std::string& scheme, const std::string& setting, std::vector<int> hits) {
  EvalReport r;
  r.dataset = "toy";
  r.scheme = scheme;
  r.model = "gru(h=8)";
  r.setting = setting;
  std::size_t id = 0;
  for (int h : hits) {
    const std::size_t rank = h ? 1 + id % 3 : 0;
    r.cases.push_back({id, id % 2 ? partitions::kWarmTest : partitions::kColdTest, {}, rank, h,
                       h ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0});
    ++id;
  }
  aggregate(r);
  return r;
}

fs::path scratch(const std::string& name) {
  fs::path p = run_root() / "report_tests" / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("one report gives one CSV row group and one SVG") {
  auto out = scratch("single");
  auto files = emit_report({make_report("rq", "item_cold", {1, 0, 1, 1, 0})}, out);
  int svgs = 0;
  for (const auto& f : files) svgs += f.extension() == ".svg";
  CHECK(svgs == 1);
  CHECK(fs::exists(out / "reports.csv"));
  CHECK(fs::exists(out / "summary.json"));
  auto rows = parse_report_csv(read_file(out / "reports.csv"));
  CHECK(rows.size() == 4);  // 2 partitions x 2 metrics
  auto summary = nlohmann::json::parse(read_file(out / "summary.json"));
  REQUIRE(summary.size() == 1);
  CHECK_FALSE(summary[0].contains("cases"));
  CHECK(summary[0].contains("digest"));
}

TEST_CASE("CSV re-parses to the in-memory values exactly") {
  std::vector<EvalReport> reports{make_report("rq", "item_cold", {1, 0, 1, 1, 0, 1, 1}),
                                  make_report("opq", "item_cold", {0, 0, 1}),
                                  make_report("rq", "user_cold", {1, 1, 0, 0, 0, 0, 0, 1, 1})};
  auto out = scratch("roundtrip");
  emit_report(reports, out);
  auto rows = parse_report_csv(read_file(out / "reports.csv"));
  std::size_t i = 0;
  for (const auto& r : reports) {
    for (const auto& [part, st] : r.partitions) {
      for (const auto& [metric, v] : {std::pair{"recall", st.recall}, std::pair{"ndcg", st.ndcg}}) {
        REQUIRE(i < rows.size());
        const auto& row = rows[i++];
        CHECK(row.scheme == r.scheme);
        CHECK(row.setting == r.setting);
        CHECK(row.partition == part);
        CHECK(row.metric == metric);
        CHECK(row.k == r.k);
        CHECK(row.n == st.n);
        CHECK(row.value == v);
      }
    }
  }
  CHECK(i == rows.size());
  CHECK_THROWS_AS(parse_report_csv("header\na,b,c\n"), ParseError);
}

TEST_CASE("SVG charts are well-formed XML") {
  std::vector<EvalReport> reports{make_report("rq", "item_cold", {1, 0, 1}), make_report("textual", "item_cold", {0, 1}),
                                  make_report("rq<&>", "user_cold", {1, 1, 0})};
  auto out = scratch("svg");
  auto files = emit_report(reports, out);
  int svgs = 0;
  for (const auto& f : files) {
    if (f.extension() != ".svg") continue;
    ++svgs;
    boost::property_tree::ptree tree;
    std::ifstream in(f);
    CHECK_NOTHROW(boost::property_tree::read_xml(in, tree));
    CHECK(tree.get_child_optional("svg").has_value());
  }
  CHECK(svgs == 2);
}

TEST_CASE("report errors") {
  CHECK_THROWS_AS(emit_report({}, scratch("empty")), ValidationError);
  auto blocker = scratch("blocked");
  fs::create_directories(blocker.parent_path());
  write_file(blocker, "a file, not a directory");
  CHECK_THROWS_AS(emit_report({make_report("rq", "item_cold", {1})}, blocker / "out"), Error);
}
