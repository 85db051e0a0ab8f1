#pragma once

// Micro/macro F1, per-class diagnostics and confusion matrices for
// single-label classification.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "finrex/common.hpp"

namespace finrex {

// Row = gold label index, column = predicted label index.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_labels)
      : n_(num_labels), counts_(num_labels * num_labels, 0) {}

  void add(int gold, int pred) { ++counts_[index(gold, pred)]; }

  std::size_t at(int gold, int pred) const { return counts_[index(gold, pred)]; }
  std::size_t size() const { return n_; }

  std::size_t row_sum(int gold) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < n_; ++p) s += counts_[static_cast<std::size_t>(gold) * n_ + p];
    return s;
  }
  std::size_t col_sum(int pred) const {
    std::size_t s = 0;
    for (std::size_t g = 0; g < n_; ++g) s += counts_[g * n_ + static_cast<std::size_t>(pred)];
    return s;
  }
  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }

  json to_json() const {
    json rows = json::array();
    for (std::size_t g = 0; g < n_; ++g)
      rows.push_back(std::vector<std::size_t>(counts_.begin() + static_cast<long>(g * n_),
                                              counts_.begin() + static_cast<long>((g + 1) * n_)));
    return rows;
  }
  static ConfusionMatrix from_json(const json& j) {
    ConfusionMatrix cm(j.size());
    for (std::size_t g = 0; g < j.size(); ++g)
      for (std::size_t p = 0; p < j[g].size(); ++p) cm.counts_[g * cm.n_ + p] = j[g][p].get<std::size_t>();
    return cm;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t index(int gold, int pred) const {
    if (gold < 0 || pred < 0 || static_cast<std::size_t>(gold) >= n_ ||
        static_cast<std::size_t>(pred) >= n_)
      throw Error("label index out of range for confusion matrix");
    return static_cast<std::size_t>(gold) * n_ + static_cast<std::size_t>(pred);
  }

  std::size_t n_ = 0;
  std::vector<std::size_t> counts_;
};

// Which label indices take part in the averaged scores.
struct LabelFilter {
  std::vector<int> include;
  std::string description = "all";

  static LabelFilter all(std::size_t num_labels) {
    LabelFilter f;
    for (std::size_t i = 0; i < num_labels; ++i) f.include.push_back(static_cast<int>(i));
    f.description = "all";
    return f;
  }
  static LabelFilter excluding(std::size_t num_labels, int excluded, const std::string& name) {
    LabelFilter f;
    for (std::size_t i = 0; i < num_labels; ++i)
      if (static_cast<int>(i) != excluded) f.include.push_back(static_cast<int>(i));
    f.description = "exclude:" + name;
    return f;
  }
  static LabelFilter only(std::vector<int> labels, std::string description) {
    return {std::move(labels), std::move(description)};
  }
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;

  bool operator==(const ClassMetrics&) const = default;
};

struct MetricsReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::string> labels;
  std::vector<ClassMetrics> per_class;  // indexed like `labels`
  ConfusionMatrix confusion;
  std::size_t num_examples = 0;
  std::string label_filter = "all";

  bool operator==(const MetricsReport&) const = default;

  const ClassMetrics& of(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw Error("no such label in report: " + label);
    return per_class[static_cast<std::size_t>(it - labels.begin())];
  }

  json to_json() const {
    json pc = json::object();
    for (std::size_t i = 0; i < labels.size(); ++i)
      pc[labels[i]] = {{"precision", per_class[i].precision},
                       {"recall", per_class[i].recall},
                       {"f1", per_class[i].f1},
                       {"support", per_class[i].support}};
    return {{"micro_f1", micro_f1},
            {"macro_f1", macro_f1},
            {"labels", labels},
            {"per_class", pc},
            {"confusion", confusion.to_json()},
            {"num_examples", num_examples},
            {"label_filter", label_filter}};
  }

  static MetricsReport from_json(const json& j) {
    MetricsReport r;
    r.micro_f1 = j.at("micro_f1").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& l : r.labels) {
      const auto& c = j.at("per_class").at(l);
      r.per_class.push_back({c.at("precision").get<double>(), c.at("recall").get<double>(),
                             c.at("f1").get<double>(), c.at("support").get<std::size_t>()});
    }
    r.confusion = ConfusionMatrix::from_json(j.at("confusion"));
    r.num_examples = j.at("num_examples").get<std::size_t>();
    r.label_filter = j.at("label_filter").get<std::string>();
    return r;
  }
};

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double f1_of(double p, double r) { return safe_div(2.0 * p * r, p + r); }

inline void check_inputs(const std::vector<int>& gold, const std::vector<int>& pred,
                         std::size_t num_labels, const LabelFilter& filter) {
  if (gold.size() != pred.size())
    throw Error("gold and prediction lists differ in length (" + std::to_string(gold.size()) +
                " vs " + std::to_string(pred.size()) + ")");
  if (gold.empty()) throw Error("no examples to score");
  if (filter.include.empty()) throw Error("label filter includes no labels");
  for (int l : filter.include)
    if (l < 0 || static_cast<std::size_t>(l) >= num_labels)
      throw Error("label filter index out of range");
}

}  // namespace detail

inline ConfusionMatrix confusion_matrix(const std::vector<int>& gold, const std::vector<int>& pred,
                                        std::size_t num_labels) {
  ConfusionMatrix cm(num_labels);
  for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], pred[i]);
  return cm;
}

// Per-class scores derived from the confusion matrix: TP on the diagonal, FP
// the rest of the column, FN the rest of the row. Zero denominators give 0.
inline ClassMetrics class_metrics(const ConfusionMatrix& cm, int label) {
  const double tp = static_cast<double>(cm.at(label, label));
  const double fp = static_cast<double>(cm.col_sum(label)) - tp;
  const double fn = static_cast<double>(cm.row_sum(label)) - tp;
  ClassMetrics m;
  m.precision = detail::safe_div(tp, tp + fp);
  m.recall = detail::safe_div(tp, tp + fn);
  m.f1 = detail::f1_of(m.precision, m.recall);
  m.support = cm.row_sum(label);
  return m;
}

inline MetricsReport compute_metrics(const std::vector<int>& gold, const std::vector<int>& pred,
                                     const std::vector<std::string>& labels,
                                     const LabelFilter& filter) {
  detail::check_inputs(gold, pred, labels.size(), filter);
  std::vector<int> include = filter.include;
  std::sort(include.begin(), include.end());
  include.erase(std::unique(include.begin(), include.end()), include.end());
  MetricsReport r;
  r.labels = labels;
  r.label_filter = filter.description;
  r.num_examples = gold.size();
  r.confusion = confusion_matrix(gold, pred, labels.size());
  for (std::size_t c = 0; c < labels.size(); ++c)
    r.per_class.push_back(class_metrics(r.confusion, static_cast<int>(c)));

  double tp = 0, fp = 0, fn = 0, f1_sum = 0;
  for (int c : include) {
    const double d = static_cast<double>(r.confusion.at(c, c));
    tp += d;
    fp += static_cast<double>(r.confusion.col_sum(c)) - d;
    fn += static_cast<double>(r.confusion.row_sum(c)) - d;
    f1_sum += r.per_class[static_cast<std::size_t>(c)].f1;
  }
  r.micro_f1 = detail::f1_of(detail::safe_div(tp, tp + fp), detail::safe_div(tp, tp + fn));
  r.macro_f1 = f1_sum / static_cast<double>(include.size());
  return r;
}

inline MetricsReport compute_metrics(const std::vector<int>& gold, const std::vector<int>& pred,
                                     const std::vector<std::string>& labels) {
  return compute_metrics(gold, pred, labels, LabelFilter::all(labels.size()));
}

inline double micro_f1(const std::vector<int>& gold, const std::vector<int>& pred,
                       std::size_t num_labels, const LabelFilter& filter) {
  std::vector<std::string> names(num_labels);
  return compute_metrics(gold, pred, names, filter).micro_f1;
}

inline double macro_f1(const std::vector<int>& gold, const std::vector<int>& pred,
                       std::size_t num_labels, const LabelFilter& filter) {
  std::vector<std::string> names(num_labels);
  return compute_metrics(gold, pred, names, filter).macro_f1;
}

// Maps label strings to indices (in `labels` order) and scores them.
inline MetricsReport compute_metrics(const std::vector<std::string>& gold,
                                     const std::vector<std::string>& pred,
                                     const std::vector<std::string>& labels,
                                     const LabelFilter& filter) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);
  auto map_all = [&](const std::vector<std::string>& xs) {
    std::vector<int> out;
    for (const auto& x : xs) {
      auto it = index.find(x);
      if (it == index.end()) throw Error("label '" + x + "' not in label set");
      out.push_back(it->second);
    }
    return out;
  };
  return compute_metrics(map_all(gold), map_all(pred), labels, filter);
}

enum class TableFormat { csv, md, txt };

inline TableFormat parse_table_format(std::string_view s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "md") return TableFormat::md;
  if (s == "txt") return TableFormat::txt;
  throw Error("unknown table format '" + std::string(s) + "' (expected csv|md|txt)");
}

// One row of a comparison table; failed runs have no scores.
struct TableRow {
  std::string name;
  std::optional<double> micro_f1;
  std::optional<double> macro_f1;
  std::string note;
};

inline std::string format4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

namespace detail {

inline std::vector<bool> best_flags(const std::vector<TableRow>& rows,
                                    std::optional<double> TableRow::*field) {
  // Ties are judged on the displayed (4-decimal) value.
  std::optional<std::string> best;
  double best_v = -1.0;
  for (const auto& r : rows)
    if ((r.*field) && *(r.*field) > best_v) best_v = *(r.*field), best = format4(*(r.*field));
  std::vector<bool> out;
  for (const auto& r : rows) out.push_back(best && (r.*field) && format4(*(r.*field)) == *best);
  return out;
}

}  // namespace detail

// Model/strategy comparison table with micro- and macro-F1 to four decimals;
// the best value in each column is flagged (all tied rows are flagged).
inline std::string report_table(const std::vector<TableRow>& rows, TableFormat format,
                                const std::string& name_header = "Model") {
  if (rows.empty()) throw Error("report_table needs at least one run");
  const auto best_micro = detail::best_flags(rows, &TableRow::micro_f1);
  const auto best_macro = detail::best_flags(rows, &TableRow::macro_f1);

  auto cell = [&](const std::optional<double>& v, bool best) -> std::string {
    if (!v) return "n/a";
    auto s = format4(*v);
    if (!best) return s;
    return format == TableFormat::md ? "**" + s + "**" : s + " *";
  };

  std::string out;
  if (format == TableFormat::csv) {
    out = name_header + ",micro_f1,macro_f1,best_micro,best_macro,note\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      out += r.name + "," + (r.micro_f1 ? format4(*r.micro_f1) : "") + "," +
             (r.macro_f1 ? format4(*r.macro_f1) : "") + "," + (best_micro[i] ? "1" : "0") + "," +
             (best_macro[i] ? "1" : "0") + "," + r.note + "\n";
    }
    return out;
  }

  std::vector<std::array<std::string, 4>> cells;
  cells.push_back({name_header, "Micro-F1", "Macro-F1", ""});
  for (std::size_t i = 0; i < rows.size(); ++i)
    cells.push_back({rows[i].name, cell(rows[i].micro_f1, best_micro[i]),
                     cell(rows[i].macro_f1, best_macro[i]), rows[i].note});
  std::array<std::size_t, 4> width{};
  for (const auto& row : cells)
    for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());
  bool any_note = width[3] > 0;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };

  for (std::size_t r = 0; r < cells.size(); ++r) {
    const auto& row = cells[r];
    if (format == TableFormat::md) {
      out += "| " + pad(row[0], width[0]) + " | " + pad(row[1], width[1]) + " | " +
             pad(row[2], width[2]) + " |";
      if (any_note) out += " " + pad(row[3], width[3]) + " |";
      out += "\n";
      if (r == 0) {
        out += "|" + std::string(width[0] + 2, '-') + "|" + std::string(width[1] + 2, '-') + "|" +
               std::string(width[2] + 2, '-') + "|";
        if (any_note) out += std::string(width[3] + 2, '-') + "|";
        out += "\n";
      }
    } else {
      std::string line = pad(row[0], width[0]) + "  " + pad(row[1], width[1]) + "  " +
                         pad(row[2], width[2]);
      if (any_note) line += "  " + row[3];
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + "\n";
      if (r == 0) out += std::string(width[0] + width[1] + width[2] + 4, '-') + "\n";
    }
  }
  return out;
}

inline std::string report_table(const std::vector<std::pair<std::string, MetricsReport>>& runs,
                                TableFormat format, const std::string& name_header = "Model") {
  std::vector<TableRow> rows;
  for (const auto& [name, rep] : runs) rows.push_back({name, rep.micro_f1, rep.macro_f1, ""});
  return report_table(rows, format, name_header);
}

// Per-class precision/recall/F1/support listing followed by the averages.
inline std::string per_class_table(const MetricsReport& r, TableFormat format) {
  std::string out;
  if (format == TableFormat::csv) {
    out = "label,precision,recall,f1,support\n";
    for (std::size_t i = 0; i < r.labels.size(); ++i)
      out += r.labels[i] + "," + format4(r.per_class[i].precision) + "," +
             format4(r.per_class[i].recall) + "," + format4(r.per_class[i].f1) + "," +
             std::to_string(r.per_class[i].support) + "\n";
    out += "micro_f1,,," + format4(r.micro_f1) + "," + std::to_string(r.num_examples) + "\n";
    out += "macro_f1,,," + format4(r.macro_f1) + "," + std::to_string(r.num_examples) + "\n";
    return out;
  }
  std::size_t w = 8;
  for (const auto& l : r.labels) w = std::max(w, l.size());
  char buf[256];
  const char* sep = format == TableFormat::md ? " | " : "  ";
  auto line = [&](const std::string& a, const std::string& b, const std::string& c,
                  const std::string& d, const std::string& e) {
    std::snprintf(buf, sizeof buf, "%s%-*s%s%9s%s%9s%s%9s%s%8s%s\n",
                  format == TableFormat::md ? "| " : "", static_cast<int>(w), a.c_str(), sep,
                  b.c_str(), sep, c.c_str(), sep, d.c_str(), sep, e.c_str(),
                  format == TableFormat::md ? " |" : "");
    out += buf;
  };
  line("label", "precision", "recall", "f1", "support");
  if (format == TableFormat::md)
    out += "|" + std::string(w + 2, '-') + "|-----------|-----------|-----------|----------|\n";
  for (std::size_t i = 0; i < r.labels.size(); ++i)
    line(r.labels[i], format4(r.per_class[i].precision), format4(r.per_class[i].recall),
         format4(r.per_class[i].f1), std::to_string(r.per_class[i].support));
  line("micro_f1", "", "", format4(r.micro_f1), std::to_string(r.num_examples));
  line("macro_f1", "", "", format4(r.macro_f1), std::to_string(r.num_examples));
  if (format == TableFormat::txt) out += "label filter: " + r.label_filter + "\n";
  return out;
}

// One line of a predictions file.
struct PredictionRecord {
  std::string instance_id;
  std::string gold_label;
  std::string pred_label;
  std::vector<double> scores;

  ordered_json to_json() const {
    ordered_json j = {{"instance_id", instance_id}, {"gold_label", gold_label}, {"pred_label", pred_label}};
    if (!scores.empty()) j["scores"] = scores;
    return j;
  }
  static PredictionRecord from_json(const json& j) {
    PredictionRecord p{j.at("instance_id").get<std::string>(), j.at("gold_label").get<std::string>(),
                       j.at("pred_label").get<std::string>(), {}};
    if (j.contains("scores")) p.scores = j.at("scores").get<std::vector<double>>();
    return p;
  }
};

inline std::vector<PredictionRecord> parse_predictions(std::string_view text) {
  std::vector<PredictionRecord> out;
  for (const auto& line : split_lines(text)) {
    try {
      out.push_back(PredictionRecord::from_json(json::parse(line.text)));
    } catch (const json::exception& e) {
      throw Error("predictions line " + std::to_string(line.number) + ": " + e.what());
    }
  }
  return out;
}

inline std::string serialize_predictions(const std::vector<PredictionRecord>& preds) {
  std::string out;
  for (const auto& p : preds) out += p.to_json().dump() + "\n";
  return out;
}

}  // namespace finrex
