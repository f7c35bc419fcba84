#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace regddm {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// One typed data column.  Numeric columns store values (NaN at missing
// rows); factor columns keep the raw strings.  Missing rows are flagged in
// both cases.
struct Column {
  std::string name;
  bool numeric = true;
  std::vector<double> num;
  std::vector<std::string> str;
  std::vector<bool> missing;

  bool any_missing() const {
    return std::find(missing.begin(), missing.end(), true) != missing.end();
  }
};

struct Table {
  std::string source;
  std::vector<std::string> id;
  std::vector<Column> cols;

  std::size_t rows() const { return id.size(); }
  const Column* find(const std::string& name) const {
    for (const auto& c : cols) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

struct ReadOptions {
  bool trim_rt = false;  // opt-in rt-window filter for real data
  double rt_min = 0.1;
  double rt_max = 3.0;
  std::vector<std::string> force_factor;   // column type overrides
  std::vector<std::string> force_numeric;
};

// Validated pair of tables plus the subject/trial linkage.
struct Dataset {
  Table subjects;
  Table trials;
  std::vector<int> trial_subject;               // trial row -> subject index
  std::vector<std::vector<int>> subject_trials; // subject index -> trial rows
  std::vector<double> response;                 // per trial, in {0,1}
  std::vector<double> rt;                       // per trial, > 0
  std::vector<std::string> warnings;
  int n_trimmed = 0;

  std::size_t n_subjects() const { return subjects.rows(); }
  std::size_t n_trials() const { return trials.rows(); }
};

namespace io_detail {

struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_no;  // file line of each data row (1-based)
};

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

// Split one CSV line; supports double-quoted fields with embedded commas and
// doubled quotes.
inline std::vector<std::string> split_csv_line(const std::string& line, const std::string& file,
                                               int line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw DataError(file + " line " + std::to_string(line_no) + ": unterminated quote");
  }
  out.push_back(trim(cur));
  return out;
}

inline RawCsv read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  RawCsv raw;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
      line.erase(0, 3);  // UTF-8 BOM
    }
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, path, line_no);
    if (raw.header.empty()) {
      raw.header = std::move(fields);
    } else {
      if (fields.size() != raw.header.size()) {
        throw DataError(path + " line " + std::to_string(line_no) + ": expected " +
                        std::to_string(raw.header.size()) + " fields, found " +
                        std::to_string(fields.size()));
      }
      raw.rows.push_back(std::move(fields));
      raw.line_no.push_back(line_no);
    }
  }
  if (raw.header.empty()) throw DataError(path + ": empty file (no header row)");
  std::set<std::string> seen;
  for (const auto& h : raw.header) {
    if (!seen.insert(h).second) {
      throw DataError(path + ": duplicate column name '" + h + "'");
    }
  }
  return raw;
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "NA"; }

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (*b == '+') ++b;  // from_chars rejects an explicit plus
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) return std::nullopt;
  return v;
}

inline int column_index(const RawCsv& raw, const std::string& path, const std::string& name) {
  for (std::size_t i = 0; i < raw.header.size(); ++i) {
    if (raw.header[i] == name) return static_cast<int>(i);
  }
  throw DataError(path + ": required column '" + name + "' is missing");
}

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

// Build a typed column with inference (numeric iff every non-missing value
// parses) and explicit overrides.
inline Column make_column(const RawCsv& raw, const std::string& path, int col,
                          const ReadOptions& opt, const std::vector<int>& keep) {
  Column c;
  c.name = raw.header[col];
  const bool forced_factor = contains(opt.force_factor, c.name);
  const bool forced_numeric = contains(opt.force_numeric, c.name);
  if (forced_factor && forced_numeric) {
    throw DataError(path + ": column '" + c.name + "' forced to both numeric and factor");
  }
  bool numeric = !forced_factor;
  if (!forced_numeric && !forced_factor) {
    for (int r : keep) {
      const std::string& s = raw.rows[r][col];
      if (is_missing(s)) continue;
      if (!parse_number(s)) {
        numeric = false;
        break;
      }
    }
  }
  c.numeric = numeric;
  for (int r : keep) {
    const std::string& s = raw.rows[r][col];
    const bool miss = is_missing(s);
    c.missing.push_back(miss);
    if (numeric) {
      if (miss) {
        c.num.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        const auto v = parse_number(s);
        if (!v) {
          throw DataError(path + " line " + std::to_string(raw.line_no[r]) + ": column '" +
                          c.name + "' declared numeric but value '" + s + "' does not parse");
        }
        c.num.push_back(*v);
      }
    } else {
      c.str.push_back(miss ? std::string() : s);
    }
  }
  return c;
}

}  // namespace io_detail

// Read, type, and cross-validate the subject and trial tables.
inline Dataset read_tables(const std::string& subjects_path, const std::string& trials_path,
                           const ReadOptions& opt = {}) {
  using namespace io_detail;
  Dataset ds;
  ds.subjects.source = subjects_path;
  ds.trials.source = trials_path;

  const RawCsv subj = read_csv(subjects_path);
  const int sid = column_index(subj, subjects_path, "id");
  if (subj.rows.empty()) throw DataError(subjects_path + ": no subject rows");
  std::map<std::string, int> subject_index;
  std::vector<int> keep_all(subj.rows.size());
  for (std::size_t i = 0; i < subj.rows.size(); ++i) keep_all[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < subj.rows.size(); ++i) {
    const std::string& id = subj.rows[i][sid];
    if (is_missing(id)) {
      throw DataError(subjects_path + " line " + std::to_string(subj.line_no[i]) +
                      ": missing subject id");
    }
    if (!subject_index.emplace(id, static_cast<int>(i)).second) {
      throw DataError(subjects_path + " line " + std::to_string(subj.line_no[i]) +
                      ": duplicate subject id '" + id + "'");
    }
    ds.subjects.id.push_back(id);
  }
  for (std::size_t c = 0; c < subj.header.size(); ++c) {
    if (static_cast<int>(c) == sid) continue;
    ds.subjects.cols.push_back(make_column(subj, subjects_path, static_cast<int>(c), opt, keep_all));
  }

  const RawCsv tri = read_csv(trials_path);
  const int tid = column_index(tri, trials_path, "id");
  const int tresp = column_index(tri, trials_path, "response");
  const int trt = column_index(tri, trials_path, "rt");
  if (tri.rows.empty()) throw DataError(trials_path + ": no trial rows");

  // rt-window trimming happens before validation: its purpose is to drop
  // artifact rows from real recordings
  std::vector<int> keep;
  for (std::size_t r = 0; r < tri.rows.size(); ++r) {
    if (opt.trim_rt) {
      const auto v = parse_number(tri.rows[r][trt]);
      if (v && (*v < opt.rt_min || *v > opt.rt_max)) {
        ++ds.n_trimmed;
        continue;
      }
    }
    keep.push_back(static_cast<int>(r));
  }
  if (ds.n_trimmed > 0) {
    ds.warnings.push_back("rt trimming dropped " + std::to_string(ds.n_trimmed) + " of " +
                          std::to_string(tri.rows.size()) + " trials outside [" +
                          std::to_string(opt.rt_min) + ", " + std::to_string(opt.rt_max) + "]");
  }
  if (keep.empty()) throw DataError(trials_path + ": no trial rows remain after rt trimming");

  ds.subject_trials.assign(ds.subjects.rows(), {});
  for (int r : keep) {
    const int line = tri.line_no[r];
    const std::string& id = tri.rows[r][tid];
    const auto it = subject_index.find(id);
    if (it == subject_index.end()) {
      throw DataError(trials_path + " line " + std::to_string(line) + ": unknown subject id '" +
                      id + "' (orphan trial)");
    }
    const auto resp = parse_number(tri.rows[r][tresp]);
    if (!resp || (*resp != 0.0 && *resp != 1.0)) {
      throw DataError(trials_path + " line " + std::to_string(line) +
                      ": response must be 0 or 1, got '" + tri.rows[r][tresp] + "'");
    }
    const auto rtv = parse_number(tri.rows[r][trt]);
    if (!rtv || !std::isfinite(*rtv) || *rtv <= 0.0) {
      throw DataError(trials_path + " line " + std::to_string(line) +
                      ": rt must be a positive finite number, got '" + tri.rows[r][trt] + "'");
    }
    const int trial_row = static_cast<int>(ds.trials.id.size());
    ds.trials.id.push_back(id);
    ds.trial_subject.push_back(it->second);
    ds.subject_trials[it->second].push_back(trial_row);
    ds.response.push_back(*resp);
    ds.rt.push_back(*rtv);
  }
  for (std::size_t c = 0; c < tri.header.size(); ++c) {
    const int ci = static_cast<int>(c);
    if (ci == tid) continue;
    Column col = make_column(tri, trials_path, ci, opt, keep);
    if (ci != tresp && ci != trt) {
      if (!col.numeric) {
        throw DataError(trials_path + ": trial covariate '" + col.name +
                        "' must be numeric (factors are subject-level only)");
      }
      if (col.any_missing()) {
        throw DataError(trials_path + ": trial covariate '" + col.name +
                        "' has missing values; trial-level missing data is not supported "
                        "(filter those rows first)");
      }
    }
    ds.trials.cols.push_back(std::move(col));
  }
  for (std::size_t i = 0; i < ds.subjects.rows(); ++i) {
    if (ds.subject_trials[i].empty()) {
      ds.warnings.push_back("subject '" + ds.subjects.id[i] + "' has no trials");
    }
  }
  return ds;
}

// Render a Table-1-style cohort summary: per-subject accuracy and latency,
// then mean (sd) for numeric covariates and level counts for factors.
inline std::string summarize_data(const Dataset& ds) {
  std::ostringstream os;
  char buf[128];
  const std::size_t n = ds.n_subjects();
  os << "Data summary\n";
  os << "Subjects: " << n << "\n";
  os << "Trials: " << ds.n_trials() << "\n";

  auto mean_sd = [&](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double s2 = 0.0;
    for (double x : xs) s2 += (x - m) * (x - m);
    const double sd = xs.size() > 1 ? std::sqrt(s2 / (static_cast<double>(xs.size()) - 1.0)) : 0.0;
    return std::pair<double, double>(m, sd);
  };
  auto fmt_pair = [&](const char* label, double m, double sd, bool single) {
    std::snprintf(buf, sizeof buf, "%s: %.3f (%.3f)%s\n", label, m, sd,
                  single ? " [single subject]" : "");
    os << buf;
  };

  std::vector<double> acc, lat;
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.subject_trials[i].empty()) continue;
    double a = 0.0, l = 0.0;
    for (int r : ds.subject_trials[i]) {
      a += ds.response[r];
      l += ds.rt[r];
    }
    const double m = static_cast<double>(ds.subject_trials[i].size());
    acc.push_back(a / m);
    lat.push_back(l / m);
  }
  if (!acc.empty()) {
    const auto [am, asd] = mean_sd(acc);
    const auto [lm, lsd] = mean_sd(lat);
    fmt_pair("Accuracy", am, asd, acc.size() == 1);
    fmt_pair("Latency", lm, lsd, lat.size() == 1);
  }
  for (const auto& c : ds.subjects.cols) {
    if (c.numeric) {
      std::vector<double> xs;
      for (std::size_t i = 0; i < c.num.size(); ++i) {
        if (!c.missing[i]) xs.push_back(c.num[i]);
      }
      if (xs.empty()) {
        os << c.name << ": all missing\n";
        continue;
      }
      const auto [m, sd] = mean_sd(xs);
      std::snprintf(buf, sizeof buf, "%s: %.3f (%.3f)", c.name.c_str(), m, sd);
      os << buf;
      if (xs.size() == 1) os << " [single subject]";
      const std::size_t miss = c.num.size() - xs.size();
      if (miss > 0) os << ", " << miss << " missing";
      os << "\n";
    } else {
      std::map<std::string, int> counts;
      int miss = 0;
      for (std::size_t i = 0; i < c.str.size(); ++i) {
        if (c.missing[i]) {
          ++miss;
        } else {
          ++counts[c.str[i]];
        }
      }
      os << c.name << ":";
      bool first = true;
      for (const auto& [level, cnt] : counts) {
        std::snprintf(buf, sizeof buf, "%s %s %d (%.0f%%)", first ? "" : ",", level.c_str(), cnt,
                      100.0 * cnt / static_cast<double>(c.str.size()));
        os << buf;
        first = false;
      }
      if (miss > 0) os << (first ? " " : ", ") << "NA " << miss;
      os << "\n";
    }
  }
  for (const auto& w : ds.warnings) os << "note: " << w << "\n";
  return os.str();
}

}  // namespace regddm
