#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coldgen/harness.hpp"

namespace coldgen {

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  return out;
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                          "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

// Grouped bars: one group per (partition, metric), one bar per system. Bars
// of repeated systems (e.g. several seeds) show the mean.
std::string grouped_bar_svg(const std::string& title, const std::vector<const EvalReport*>& reports) {
  std::vector<std::string> systems;
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> cell;  // (system, group) -> sum, n
  std::vector<std::string> groups;
  for (const auto* r : reports) {
    const std::string sys = r->scheme + " / " + r->model;
    if (std::find(systems.begin(), systems.end(), sys) == systems.end()) systems.push_back(sys);
    for (const auto& [part, st] : r->partitions) {
      for (const auto& [metric, v] : {std::pair{"Recall", st.recall}, std::pair{"NDCG", st.ndcg}}) {
        const std::string g = part + " " + metric + "@" + std::to_string(r->k);
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
        if (!v) continue;
        auto& c = cell[{sys, g}];
        c.first += *v;
        c.second += 1;
      }
    }
  }
  double vmax = 0.0;
  for (const auto& [_, c] : cell) vmax = std::max(vmax, c.first / c.second);
  if (vmax <= 0.0) vmax = 1.0;

  const int left = 60, top = 40, plot_h = 240, group_w = 40 + 18 * static_cast<int>(systems.size());
  const int width = left + group_w * static_cast<int>(groups.size()) + 20;
  const int height = top + plot_h + 60 + 16 * static_cast<int>(systems.size());
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<text x=\"" << left << "\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 10 << "\" y2=\""
    << top + plot_h << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = vmax * t / 4.0;
    const int y = top + plot_h - plot_h * t / 4;
    s << "<text x=\"" << left - 5 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << format_double(std::round(v * 1e4) / 1e4)
      << "</text>\n";
  }
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const int gx = left + static_cast<int>(gi) * group_w + 20;
    for (std::size_t si = 0; si < systems.size(); ++si) {
      auto it = cell.find({systems[si], groups[gi]});
      if (it == cell.end()) continue;
      const double v = it->second.first / it->second.second;
      const int h = static_cast<int>(std::lround(plot_h * v / vmax));
      s << "<rect x=\"" << gx + 18 * static_cast<int>(si) << "\" y=\"" << top + plot_h - h
        << "\" width=\"16\" height=\"" << h << "\" fill=\"" << kPalette[si % 10] << "\"><title>"
        << xml_escape(systems[si] + ", " + groups[gi] + " = " + format_double(v)) << "</title></rect>\n";
    }
    s << "<text x=\"" << gx << "\" y=\"" << top + plot_h + 16 << "\">" << xml_escape(groups[gi]) << "</text>\n";
  }
  for (std::size_t si = 0; si < systems.size(); ++si) {
    const int y = top + plot_h + 36 + 16 * static_cast<int>(si);
    s << "<rect x=\"" << left << "\" y=\"" << y - 10 << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[si % 10]
      << "\"/>\n<text x=\"" << left + 18 << "\" y=\"" << y << "\">" << xml_escape(systems[si]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const std::vector<EvalReport>& reports,
                                               const std::filesystem::path& out_dir) {
  if (reports.empty()) throw ValidationError("emit_report needs at least one report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create report directory " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;

  auto put = [&](const std::filesystem::path& p, const std::string& content) {
    write_file(p, content);
    written.push_back(p);
  };
  put(out_dir / "reports.csv", report_csv(reports));

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& r : reports) {
    auto j = report_to_json(r);
    j.erase("cases");
    j["digest"] = report_digest(r);
    summary.push_back(j);
  }
  put(out_dir / "summary.json", summary.dump(1) + "\n");

  std::map<std::pair<std::string, std::string>, std::vector<const EvalReport*>> panels;
  for (const auto& r : reports) panels[{r.dataset, r.setting}].push_back(&r);
  for (const auto& [key, rs] : panels) {
    const std::string name = file_safe((key.first.empty() ? "dataset" : key.first) + "_" + key.second) + ".svg";
    put(out_dir / name, grouped_bar_svg(key.first + " " + key.second, rs));
  }
  return written;
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::vector<ReportRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      auto pos = line.find(',', start);
      f.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (f.size() != 8) throw ParseError("reports.csv", lineno, "expected 8 fields");
    ReportRow r{f[0], f[1], f[2], f[3], f[4], 0, std::nullopt, 0};
    auto num = [&](const std::string& s, auto& out) {
      auto [p, e] = std::from_chars(s.data(), s.data() + s.size(), out);
      if (e != std::errc() || p != s.data() + s.size()) throw ParseError("reports.csv", lineno, "bad number '" + s + "'");
    };
    num(f[5], r.k);
    if (!f[6].empty()) {
      double v = 0.0;
      num(f[6], v);
      r.value = v;
    }
    num(f[7], r.n);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace coldgen
