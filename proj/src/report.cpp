#include "annot/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "annot/csv.hpp"
#include "annot/errors.hpp"

namespace annot::report {
namespace {

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, value);
  return buf;
}

const char* series_color(std::size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};
  return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

}  // namespace

ProportionTable variant_proportions(
    const std::vector<std::pair<std::string, std::string>>& dataset,
    const std::map<std::string, InstanceMeta>& meta, GroupBy group_by,
    const std::vector<std::string>& label_set) {
  if (label_set.empty()) throw ParameterError("label set must be non-empty");
  std::set<std::string> known(label_set.begin(), label_set.end());

  std::vector<std::string> missing;
  std::map<std::string, std::map<std::string, std::int64_t>> counts;  // group → label → n
  for (const auto& [id, label] : dataset) {
    auto it = meta.find(id);
    if (it == meta.end()) {
      if (missing.size() < 20) missing.push_back(id);
      continue;
    }
    if (!known.count(label))
      throw ReportError("label \"" + label + "\" for " + id + " is not in the label set");
    std::string group = group_by == GroupBy::kDecade
                            ? it->second.decade
                            : it->second.decade + "/" + it->second.genre;
    counts[group][label] += 1;
  }
  if (!missing.empty()) {
    std::string msg = "instances missing metadata:";
    for (const auto& id : missing) msg += " " + id;
    throw ReportError(msg);
  }

  ProportionTable table;
  table.labels = label_set;
  for (const auto& [group, by_label] : counts) {  // std::map: sorted keys
    std::int64_t total = 0;
    for (const auto& [label, n] : by_label) total += n;
    if (total == 0) continue;
    table.groups.push_back(group);
    table.group_totals[group] = total;
    for (const auto& label : label_set) {
      ProportionRow row;
      row.group = group;
      row.label = label;
      auto cit = by_label.find(label);
      row.count = cit == by_label.end() ? 0 : cit->second;
      row.proportion = static_cast<double>(row.count) / static_cast<double>(total);
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void write_proportions_csv(const ProportionTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "group_key,label,count,proportion\n";
  for (const auto& row : table.rows) {
    out << csv_row({row.group, row.label, std::to_string(row.count),
                    fmt("%.6f", row.proportion)})
        << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

std::string render_chart_svg(const ProportionTable& table, const std::string& title) {
  constexpr double kWidth = 860, kHeight = 480;
  constexpr double kLeft = 64, kRight = 680, kTop = 48, kBottom = 408;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";

  // Axes and horizontal gridlines at 0, .25, .5, .75, 1.
  for (int g = 0; g <= 4; ++g) {
    double frac = g / 4.0;
    double y = kBottom - frac * (kBottom - kTop);
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << fmt("%.2f", y) << "\" x2=\"" << kRight
        << "\" y2=\"" << fmt("%.2f", y) << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << fmt("%.2f", y + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt("%.2f", frac) << "</text>\n";
  }
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kBottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight << "\" y2=\""
      << kBottom << "\" stroke=\"black\"/>\n";

  std::size_t n = table.groups.size();
  auto x_at = [&](std::size_t i) {
    if (n <= 1) return (kLeft + kRight) / 2.0;
    return kLeft + (kRight - kLeft) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto y_at = [&](double p) { return kBottom - p * (kBottom - kTop); };

  // X tick labels; thin out when crowded.
  std::size_t step = n > 16 ? (n + 15) / 16 : 1;
  for (std::size_t i = 0; i < n; i += step) {
    svg << "<text x=\"" << fmt("%.2f", x_at(i)) << "\" y=\"" << kBottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << table.groups[i] << "</text>\n";
  }

  for (std::size_t s = 0; s < table.labels.size(); ++s) {
    const std::string& label = table.labels[s];
    svg << "<polyline fill=\"none\" stroke=\"" << series_color(s) << "\" stroke-width=\"2\" "
        << "points=\"";
    for (std::size_t i = 0; i < n; ++i) {
      const ProportionRow& row = table.rows[i * table.labels.size() + s];
      if (i) svg << ' ';
      svg << fmt("%.2f", x_at(i)) << ',' << fmt("%.2f", y_at(row.proportion));
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
      const ProportionRow& row = table.rows[i * table.labels.size() + s];
      svg << "<circle cx=\"" << fmt("%.2f", x_at(i)) << "\" cy=\""
          << fmt("%.2f", y_at(row.proportion)) << "\" r=\"3\" fill=\"" << series_color(s)
          << "\"/>\n";
    }
    double ly = kTop + 20.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kRight + 16 << "\" y1=\"" << fmt("%.2f", ly) << "\" x2=\""
        << kRight + 44 << "\" y2=\"" << fmt("%.2f", ly) << "\" stroke=\"" << series_color(s)
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kRight + 50 << "\" y=\"" << fmt("%.2f", ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string format_table_text(const ProportionTable& table) {
  std::size_t group_width = 9;
  for (const auto& g : table.groups) group_width = std::max(group_width, g.size());
  std::ostringstream out;
  out << std::left;
  char head[64];
  std::snprintf(head, sizeof(head), "%-*s", static_cast<int>(group_width), "group");
  out << head << "  total";
  for (const auto& label : table.labels) {
    std::snprintf(head, sizeof(head), "  %12s", label.c_str());
    out << head;
  }
  out << '\n';
  for (std::size_t i = 0; i < table.groups.size(); ++i) {
    const std::string& group = table.groups[i];
    std::snprintf(head, sizeof(head), "%-*s", static_cast<int>(group_width), group.c_str());
    out << head;
    std::snprintf(head, sizeof(head), "  %5lld",
                  static_cast<long long>(table.group_totals.at(group)));
    out << head;
    for (std::size_t s = 0; s < table.labels.size(); ++s) {
      const ProportionRow& row = table.rows[i * table.labels.size() + s];
      std::snprintf(head, sizeof(head), "  %6lld %.3f", static_cast<long long>(row.count),
                    row.proportion);
      out << head;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace annot::report
