#include "deconf/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace deconf {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_number(const std::string& cell, const std::string& file, size_t line_no,
                    size_t col_no) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ParseError(file + ":" + std::to_string(line_no) + ": column " +
                     std::to_string(col_no + 1) + ": expected a number, got '" + cell + "'");
  return value;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // raw cells
  std::vector<size_t> line_numbers;
};

Table read_table(const std::string& path, char delim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  Table table;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto cells = split_line(line, delim);
    if (table.header.empty()) {
      table.header = std::move(cells);
    } else {
      if (cells.size() != table.header.size())
        throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(table.header.size()) + " cells, got " +
                         std::to_string(cells.size()));
      table.rows.push_back(std::move(cells));
      table.line_numbers.push_back(line_no);
    }
  }
  if (table.header.empty()) throw ParseError(path + ": missing header row");
  return table;
}

std::string format_value(double v, bool binary) {
  char buf[40];
  if (binary || v == std::floor(v)) {
    // integral values round-trip without a fractional part
    if (std::abs(v) < 1e15) {
      std::snprintf(buf, sizeof(buf), "%.0f", v);
      return buf;
    }
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ExposureMatrix load_exposure_matrix(const std::string& path,
                                    std::vector<std::string>* labels, char delimiter) {
  Table table = read_table(path, delimiter);
  if (table.header.empty() || table.header[0] != "patient_id")
    throw ParseError(path + ": first column must be 'patient_id'");
  const size_t d = table.header.size() - 1;
  const size_t n = table.rows.size();
  if (n == 0) throw ParseError(path + ": no patient rows");

  ExposureMatrix exposures;
  exposures.values.resize(n, d);
  bool all_binary = true;
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    if (!seen.insert(row[0]).second)
      throw ParseError(path + ":" + std::to_string(table.line_numbers[i]) +
                       ": duplicate patient_id '" + row[0] + "'");
    for (size_t j = 0; j < d; ++j) {
      const double v = parse_number(row[j + 1], path, table.line_numbers[i], j + 1);
      exposures.values(i, j) = v;
      if (v != 0.0 && v != 1.0) all_binary = false;
    }
  }
  exposures.binary = all_binary;
  if (labels) labels->assign(table.header.begin() + 1, table.header.end());
  return exposures;
}

Cohort load_cohort(const CohortFiles& files, LoadStats* stats) {
  Table expo = read_table(files.exposures_path, files.delimiter);
  if (expo.header.empty() || expo.header[0] != "patient_id")
    throw ParseError(files.exposures_path + ": first column must be 'patient_id'");
  const size_t d = expo.header.size() - 1;

  Table outc = read_table(files.outcomes_path, files.delimiter);
  if (outc.header.size() != 2 || outc.header[0] != "patient_id" ||
      outc.header[1] != "outcome")
    throw ParseError(files.outcomes_path + ": header must be 'patient_id,outcome'");
  std::unordered_map<std::string, double> outcome_by_id;
  for (size_t i = 0; i < outc.rows.size(); ++i) {
    const auto& row = outc.rows[i];
    const double y = parse_number(row[1], files.outcomes_path, outc.line_numbers[i], 1);
    if (!outcome_by_id.emplace(row[0], y).second)
      throw ParseError(files.outcomes_path + ":" + std::to_string(outc.line_numbers[i]) +
                       ": duplicate patient_id '" + row[0] + "'");
  }

  std::vector<std::string> kept_ids;
  std::vector<size_t> kept_rows;
  std::unordered_set<std::string> seen;
  size_t dropped = 0;
  for (size_t i = 0; i < expo.rows.size(); ++i) {
    const auto& id = expo.rows[i][0];
    if (!seen.insert(id).second)
      throw ParseError(files.exposures_path + ":" + std::to_string(expo.line_numbers[i]) +
                       ": duplicate patient_id '" + id + "'");
    if (outcome_by_id.count(id)) {
      kept_ids.push_back(id);
      kept_rows.push_back(i);
    } else {
      ++dropped;
    }
  }
  if (dropped > 0)
    std::fprintf(stderr, "load_cohort: dropped %zu patient(s) missing an outcome\n",
                 dropped);
  if (stats) stats->dropped_missing_outcome = dropped;
  if (kept_rows.empty()) throw ParseError("cohort is empty after joining on patient_id");

  Cohort cohort;
  cohort.cause_labels.assign(expo.header.begin() + 1, expo.header.end());
  cohort.exposures.values.resize(kept_rows.size(), d);
  cohort.outcomes.resize(kept_rows.size());
  bool all_binary = true;
  for (size_t r = 0; r < kept_rows.size(); ++r) {
    const auto& row = expo.rows[kept_rows[r]];
    for (size_t j = 0; j < d; ++j) {
      const double v =
          parse_number(row[j + 1], files.exposures_path, expo.line_numbers[kept_rows[r]], j + 1);
      cohort.exposures.values(r, j) = v;
      if (v != 0.0 && v != 1.0) all_binary = false;
    }
    cohort.outcomes(r) = outcome_by_id.at(kept_ids[r]);
  }
  cohort.exposures.binary = all_binary;

  for (size_t j = 0; j < d; ++j)
    if ((cohort.exposures.values.col(j).array() != 0.0).count() == 0)
      throw ValidationError("exposures: cause '" + cohort.cause_labels[j] +
                            "' has no nonzero entries after ingestion");

  if (files.truth_path) {
    Table truth = read_table(*files.truth_path, files.delimiter);
    const auto& h = truth.header;
    if (h.size() < 2 || h[0] != "label" || h[1] != "true_effect")
      throw ParseError(*files.truth_path + ": header must start with 'label,true_effect'");
    int k_conf = 0;
    if (h.size() > 2) {
      if (h[2] != "patient_id")
        throw ParseError(*files.truth_path + ": third column must be 'patient_id'");
      k_conf = static_cast<int>(h.size()) - 3;
      for (int k = 0; k < k_conf; ++k)
        if (h[3 + k] != "confounder_" + std::to_string(k + 1))
          throw ParseError(*files.truth_path + ": expected column 'confounder_" +
                           std::to_string(k + 1) + "', got '" + h[3 + k] + "'");
    }

    std::unordered_map<std::string, double> effect_by_label;
    std::unordered_map<std::string, std::vector<double>> conf_by_id;
    for (size_t i = 0; i < truth.rows.size(); ++i) {
      const auto& row = truth.rows[i];
      if (!row[0].empty())
        effect_by_label[row[0]] =
            parse_number(row[1], *files.truth_path, truth.line_numbers[i], 1);
      if (k_conf > 0 && !row[2].empty()) {
        std::vector<double> c(k_conf);
        for (int k = 0; k < k_conf; ++k)
          c[k] = parse_number(row[3 + k], *files.truth_path, truth.line_numbers[i], 3 + k);
        conf_by_id[row[2]] = std::move(c);
      }
    }

    if (!effect_by_label.empty()) {
      Vector effects(d);
      for (size_t j = 0; j < d; ++j) {
        auto it = effect_by_label.find(cohort.cause_labels[j]);
        if (it == effect_by_label.end())
          throw ParseError(*files.truth_path + ": no true_effect row for cause '" +
                           cohort.cause_labels[j] + "'");
        effects(j) = it->second;
      }
      cohort.true_effects = std::move(effects);
    }
    if (k_conf > 0) {
      Matrix conf(kept_rows.size(), k_conf);
      for (size_t r = 0; r < kept_ids.size(); ++r) {
        auto it = conf_by_id.find(kept_ids[r]);
        if (it == conf_by_id.end())
          throw ParseError(*files.truth_path + ": no confounder row for patient '" +
                           kept_ids[r] + "'");
        for (int k = 0; k < k_conf; ++k) conf(r, k) = it->second[k];
      }
      cohort.true_confounders = std::move(conf);
    }
  }

  return validate_cohort(cohort), cohort;
}

void save_cohort(const Cohort& cohort, const CohortFiles& files) {
  validate_cohort(cohort);
  const auto n = cohort.exposures.n_patients();
  const auto d = cohort.exposures.n_causes();
  const char delim = files.delimiter;

  std::vector<std::string> ids(n);
  for (Eigen::Index i = 0; i < n; ++i) ids[i] = "p" + std::to_string(i + 1);

  {
    std::ofstream out(files.exposures_path);
    if (!out) throw IoError("cannot write '" + files.exposures_path + "'");
    out << "patient_id";
    for (Eigen::Index j = 0; j < d; ++j) out << delim << cohort.cause_labels[j];
    out << "\n";
    for (Eigen::Index i = 0; i < n; ++i) {
      out << ids[i];
      for (Eigen::Index j = 0; j < d; ++j)
        out << delim << format_value(cohort.exposures.values(i, j), cohort.exposures.binary);
      out << "\n";
    }
  }
  {
    std::ofstream out(files.outcomes_path);
    if (!out) throw IoError("cannot write '" + files.outcomes_path + "'");
    out << "patient_id" << delim << "outcome\n";
    for (Eigen::Index i = 0; i < n; ++i)
      out << ids[i] << delim << format_value(cohort.outcomes(i), false) << "\n";
  }
  if (files.truth_path) {
    if (!cohort.true_effects && !cohort.true_confounders)
      throw ValidationError("truth sidecar requested but cohort has no ground truth");
    std::ofstream out(*files.truth_path);
    if (!out) throw IoError("cannot write '" + *files.truth_path + "'");
    const int k_conf =
        cohort.true_confounders ? static_cast<int>(cohort.true_confounders->cols()) : 0;
    out << "label" << delim << "true_effect";
    if (k_conf > 0) {
      out << delim << "patient_id";
      for (int k = 0; k < k_conf; ++k) out << delim << "confounder_" << (k + 1);
    }
    out << "\n";
    const Eigen::Index rows = std::max<Eigen::Index>(d, k_conf > 0 ? n : 0);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (r < d && cohort.true_effects)
        out << cohort.cause_labels[r] << delim
            << format_value((*cohort.true_effects)(r), false);
      else
        out << delim;
      if (k_conf > 0) {
        if (r < n) {
          out << delim << ids[r];
          for (int k = 0; k < k_conf; ++k)
            out << delim << format_value((*cohort.true_confounders)(r, k), false);
        } else {
          for (int k = 0; k <= k_conf; ++k) out << delim;
        }
      }
      out << "\n";
    }
  }
}

Cohort filter_rare_causes(const Cohort& cohort, double quantile,
                          std::vector<std::string>* removed) {
  if (!(quantile >= 0.0 && quantile < 1.0))
    throw ValidationError("rare-cause quantile must lie in [0, 1), got " +
                          std::to_string(quantile));
  validate_cohort(cohort);
  const auto d = cohort.exposures.n_causes();
  const long n_drop = static_cast<long>(std::floor(quantile * d));
  if (removed) removed->clear();
  if (n_drop == 0) return cohort;

  struct Ranked {
    long count;
    std::string label;
    Eigen::Index col;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const long count = (cohort.exposures.values.col(j).array() != 0.0).count();
    ranked.push_back({count, cohort.cause_labels[j], j});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return a.count != b.count ? a.count < b.count : a.label < b.label;
  });

  std::vector<bool> drop(d, false);
  for (long t = 0; t < n_drop; ++t) {
    drop[ranked[t].col] = true;
    if (removed) removed->push_back(ranked[t].label);
    std::fprintf(stderr, "filter_rare_causes: removing '%s' (%ld nonzero)\n",
                 ranked[t].label.c_str(), ranked[t].count);
  }

  Cohort out;
  out.exposures.binary = cohort.exposures.binary;
  out.exposures.values.resize(cohort.exposures.n_patients(), d - n_drop);
  out.outcomes = cohort.outcomes;
  out.true_confounders = cohort.true_confounders;
  Eigen::Index jj = 0;
  Vector effects(d - n_drop);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (drop[j]) continue;
    out.exposures.values.col(jj) = cohort.exposures.values.col(j);
    out.cause_labels.push_back(cohort.cause_labels[j]);
    if (cohort.true_effects) effects(jj) = (*cohort.true_effects)(j);
    ++jj;
  }
  if (cohort.true_effects) out.true_effects = std::move(effects);
  return validate_cohort(out), out;
}

}  // namespace deconf
