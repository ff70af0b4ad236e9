#pragma once

// Reading metric CSVs back into tables and the cross-strategy comparison
// report with paired Wilcoxon tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedreview/multitask.hpp"

namespace fedreview {

// Parses `round,task,metric,value_percent`; rows keep first-appearance order.
inline TaskMetricsTable read_metrics_csv(std::istream& in, const std::string& source = "csv") {
  TaskMetricsTable table;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    return FormatError(source + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "round,task,metric,value_percent") throw fail("unexpected header '" + line + "'");
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw fail("expected 4 fields");
    Task task;
    try {
      task = parse_task(f[1]);
    } catch (const Error&) {
      throw fail("unknown task '" + f[1] + "'");
    }
    const auto& names = metric_names(kind_of(task));
    const auto m = std::find(names.begin(), names.end(), f[2]) - names.begin();
    if (m == 3) throw fail("unknown metric '" + f[2] + "' for " + f[1]);
    char* end = nullptr;
    const double v = std::strtod(f[3].c_str(), &end);
    if (f[3].empty() || end != f[3].c_str() + f[3].size()) throw fail("bad value '" + f[3] + "'");

    auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const TableRow& r) { return r.label == f[0]; });
    if (it == table.rows.end()) {
      table.rows.push_back({f[0], "", {}});
      it = table.rows.end() - 1;
    }
    auto& slot = it->scores[index_of(task)];
    if (!slot) slot = Scores{std::nan(""), std::nan(""), std::nan("")};
    (*slot)[static_cast<std::size_t>(m)] = v / 100.0;
  }
  for (const auto& row : table.rows) {
    for (const auto& s : row.scores) {
      if (s && std::any_of(s->begin(), s->end(), [](double x) { return std::isnan(x); })) {
        throw FormatError(source + ": row '" + row.label + "' has an incomplete metric triple");
      }
    }
  }
  return table;
}

inline TaskMetricsTable read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  return read_metrics_csv(in, path);
}

// Rows labelled 0, 1, 2, ... as a round history for one task.
inline RoundHistory history_from_table(const TaskMetricsTable& table, Task task) {
  RoundHistory h;
  h.task = task;
  for (const auto& row : table.rows) {
    const auto& s = row.scores[index_of(task)];
    if (!s) continue;
    if (row.label != std::to_string(h.rounds.size())) {
      throw FormatError("history rows must be rounds 0, 1, 2, ...; found '" + row.label + "'");
    }
    h.rounds.push_back(*s);
  }
  return h;
}

// ---------------------------------------------------------------- comparison

inline const std::vector<std::string>& comparison_order() {
  static const std::vector<std::string> order{"Vanilla", "Central", "FedBEST", "TOC",
                                              "COT",     "CAT",     "CFT",     "CFT-reg"};
  return order;
}

struct PairedComparison {
  std::string better;
  std::string baseline;
  std::size_t n_metrics = 0;
  WilcoxonResult test;
};

struct ComparisonReport {
  TaskMetricsTable table;  // rows in comparison_order()
  std::vector<PairedComparison> comparisons;
  std::vector<std::string> warnings;
};

// Differences better - baseline over every metric both rows report, in
// percent, rounded to 1e-9 so equal printed gaps tie.
inline std::vector<double> metric_differences(const TableRow& better, const TableRow& baseline) {
  std::vector<double> d;
  for (std::size_t t = 0; t < 3; ++t) {
    if (!better.scores[t] || !baseline.scores[t]) continue;
    for (std::size_t m = 0; m < 3; ++m) {
      const double gap = 100.0 * ((*better.scores[t])[m] - (*baseline.scores[t])[m]);
      d.push_back(std::round(gap * 1e9) / 1e9);
    }
  }
  return d;
}

inline ComparisonReport build_comparison(const std::vector<TableRow>& rows) {
  ComparisonReport out;
  for (const auto& name : comparison_order()) {
    TableRow merged{name, "", {}};
    bool found = false;
    for (const auto& r : rows) {
      if (r.label != name) continue;
      found = true;
      for (std::size_t t = 0; t < 3; ++t) {
        if (r.scores[t]) merged.scores[t] = r.scores[t];
      }
      if (!r.best.empty()) merged.best = r.best;
    }
    if (found) {
      out.table.rows.push_back(std::move(merged));
    } else {
      out.warnings.push_back("no results for " + name);
    }
  }
  for (const auto& r : rows) {
    const auto& order = comparison_order();
    if (std::find(order.begin(), order.end(), r.label) == order.end()) {
      out.warnings.push_back("ignored unknown row '" + r.label + "'");
    }
  }
  const std::pair<const char*, const char*> pairs[] = {
      {"FedBEST", "Vanilla"}, {"Central", "Vanilla"}, {"CFT-reg", "FedBEST"}};
  for (const auto& [a, b] : pairs) {
    const TableRow* ra = out.table.find(a);
    const TableRow* rb = out.table.find(b);
    if (!ra || !rb) continue;
    const auto d = metric_differences(*ra, *rb);
    try {
      out.comparisons.push_back({a, b, d.size(), wilcoxon_signed_rank(d)});
    } catch (const Error& e) {
      out.warnings.push_back(std::string(a) + " vs " + b + ": " + e.what());
    }
  }
  return out;
}

// Every summary.csv below `dir`, in path order.
inline std::vector<TableRow> collect_summaries(const std::string& dir, std::vector<std::string>* sources = nullptr) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename() == "summary.csv") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<TableRow> rows;
  for (const auto& f : files) {
    auto t = read_metrics_csv(f.string());
    rows.insert(rows.end(), t.rows.begin(), t.rows.end());
    if (sources) sources->push_back(f.string());
  }
  return rows;
}

inline void write_comparison_markdown(std::ostream& out, const ComparisonReport& report) {
  out << "# Model comparison\n\n";
  if (!report.table.rows.empty()) {
    report.table.write_markdown(out);
    out << '\n';
  }
  if (!report.comparisons.empty()) {
    out << "## Wilcoxon signed-rank tests (two-sided, exact)\n\n";
    out << "| Comparison | n | W+ | W- | W | p |\n|---|---:|---:|---:|---:|---:|\n";
    char buf[160];
    for (const auto& c : report.comparisons) {
      std::snprintf(buf, sizeof buf, "| %s vs %s | %zu | %.1f | %.1f | %.1f | %.4f |\n", c.better.c_str(),
                    c.baseline.c_str(), c.test.n, c.test.w_plus, c.test.w_minus, c.test.w, c.test.p_two_sided);
      out << buf;
    }
    out << '\n';
  }
  if (!report.warnings.empty()) {
    out << "## Warnings\n\n";
    for (const auto& w : report.warnings) out << "- " << w << '\n';
  }
}

}  // namespace fedreview
