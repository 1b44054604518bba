#ifndef ANNOT_REPORT_HPP
#define ANNOT_REPORT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace annot::report {

enum class GroupBy { kDecade, kDecadeGenre };

struct InstanceMeta {
  std::string decade;
  std::string genre;
};

struct ProportionRow {
  std::string group;
  std::string label;
  std::int64_t count = 0;
  double proportion = 0.0;
};

// Group-major long-format table: every label of the label set appears in
// every non-empty group; empty groups are omitted entirely.
struct ProportionTable {
  std::vector<std::string> labels;
  std::vector<std::string> groups;  // chronological, then genre
  std::vector<ProportionRow> rows;  // groups.size() * labels.size()
  std::map<std::string, std::int64_t> group_totals;
};

// Exact per-group label counts and proportions over (instance_id, label)
// pairs. Metadata must cover every instance; decade keys sort
// chronologically because they are fixed-width "YYY0s" strings.
ProportionTable variant_proportions(
    const std::vector<std::pair<std::string, std::string>>& dataset,
    const std::map<std::string, InstanceMeta>& meta, GroupBy group_by,
    const std::vector<std::string>& label_set);

// Long-format CSV: group_key,label,count,proportion.
void write_proportions_csv(const ProportionTable& table, const std::string& path);

// Deterministic standalone SVG line chart, one series per label over the
// table's group order. Identical tables yield byte-identical output.
std::string render_chart_svg(const ProportionTable& table, const std::string& title);

// Human-readable fixed-width rendering of the table.
std::string format_table_text(const ProportionTable& table);

}  // namespace annot::report

#endif  // ANNOT_REPORT_HPP
