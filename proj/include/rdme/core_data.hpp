#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rdme/errors.hpp"

namespace rdme {

enum class DesignKind { sharp, fuzzy };
enum class Side { left, right };

// One row of data. x is the running variable in cutoff-normalized units
// (threshold at 0); t is the treatment indicator, binary in sharp designs.
struct Observation {
  double y = 0.0;
  double t = 0.0;
  double x = 0.0;
};

struct SupportPoint {
  double x = 0.0;
  int count = 0;
};

// Immutable after construction (build through make_sample). Observations
// are sorted by x, so any bandwidth window is a contiguous span.
struct RdSample {
  std::vector<Observation> observations;
  double cutoff_original = 0.0;
  // Removed half-open interval [-s, s); unset when no trimming happened.
  std::optional<double> doughnut;
  DesignKind design = DesignKind::sharp;
  // t values are means over aggregated units rather than 0/1 indicators.
  bool preaggregated_t = false;
  // Sorted distinct x values with multiplicities; matches observations.
  std::vector<SupportPoint> support;

  std::size_t size() const { return observations.size(); }
};

struct ScaleInfo {
  double scale = 0.0;  // max over the sample of x^2
};

namespace detail {

inline std::vector<SupportPoint> build_support(
    const std::vector<Observation>& obs) {
  std::vector<SupportPoint> support;
  for (const auto& o : obs) {
    if (!support.empty() && support.back().x == o.x) {
      ++support.back().count;
    } else {
      support.push_back({o.x, 1});
    }
  }
  return support;
}

}  // namespace detail

// Builds a sample from cutoff-normalized observations, sorting by x and
// validating the row invariants.
inline RdSample make_sample(std::vector<Observation> obs, DesignKind design,
                            double cutoff_original = 0.0,
                            bool preaggregated_t = false) {
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!std::isfinite(obs[i].y) || !std::isfinite(obs[i].x) ||
        !std::isfinite(obs[i].t)) {
      throw DataError("make_sample: non-finite value at row " +
                      std::to_string(i));
    }
    const double t = obs[i].t;
    if (design == DesignKind::sharp || !preaggregated_t) {
      if (t != 0.0 && t != 1.0) {
        throw DataError("make_sample: t must be 0 or 1 at row " +
                        std::to_string(i) +
                        (design == DesignKind::fuzzy
                             ? " (set preaggregated_t for mean-valued t)"
                             : ""));
      }
    } else if (t < 0.0 || t > 1.0) {
      throw DataError("make_sample: pre-aggregated t outside [0,1] at row " +
                      std::to_string(i));
    }
  }
  std::stable_sort(obs.begin(), obs.end(),
                   [](const Observation& a, const Observation& b) {
                     return a.x < b.x;
                   });
  RdSample s;
  s.observations = std::move(obs);
  s.cutoff_original = cutoff_original;
  s.design = design;
  s.preaggregated_t = preaggregated_t;
  s.support = detail::build_support(s.observations);
  return s;
}

// Shifts raw running-variable values so the threshold sits at zero.
inline std::vector<double> normalize_cutoff(const std::vector<double>& raw_x,
                                            double c) {
  if (!std::isfinite(c)) {
    throw InvalidParameterError("normalize_cutoff: non-finite cutoff");
  }
  std::vector<double> out;
  out.reserve(raw_x.size());
  for (std::size_t i = 0; i < raw_x.size(); ++i) {
    if (!std::isfinite(raw_x[i])) {
      throw DataError("normalize_cutoff: non-finite value at row " +
                      std::to_string(i));
    }
    out.push_back(raw_x[i] - c);
  }
  return out;
}

// Rounds x_star down to a multiple of `granularity`; the implied error
// x_star - result lies in [0, granularity).
inline double round_down(double x_star, double granularity) {
  if (!(granularity > 0.0)) {
    throw InvalidParameterError("round_down: granularity must be > 0");
  }
  return granularity * std::floor(x_star / granularity);
}

struct TrimResult {
  RdSample sample;
  std::size_t removed = 0;
  // Set when a side of the cutoff ends up with no observations; estimation
  // will fail the support check later.
  bool left_empty = false;
  bool right_empty = false;
};

// Removes observations with x in [-s, s). The boundary point x = -s is
// retained. Idempotent for a fixed s; s = 0 removes nothing.
inline TrimResult doughnut_trim(const RdSample& sample, double s) {
  if (!(s >= 0.0)) {
    throw InvalidParameterError("doughnut_trim: s must be >= 0");
  }
  TrimResult res;
  if (s == 0.0) {
    res.sample = sample;
  } else {
    std::vector<Observation> kept;
    kept.reserve(sample.observations.size());
    for (const auto& o : sample.observations) {
      if (o.x >= -s && o.x < s) continue;
      kept.push_back(o);
    }
    res.removed = sample.observations.size() - kept.size();
    res.sample.observations = std::move(kept);
    res.sample.cutoff_original = sample.cutoff_original;
    res.sample.design = sample.design;
    res.sample.preaggregated_t = sample.preaggregated_t;
    res.sample.support = detail::build_support(res.sample.observations);
    res.sample.doughnut =
        sample.doughnut ? std::max(*sample.doughnut, s) : s;
  }
  bool has_left = false, has_right = false;
  for (const auto& o : res.sample.observations) {
    (o.x < 0 ? has_left : has_right) = true;
  }
  res.left_empty = !has_left;
  res.right_empty = !has_right;
  return res;
}

// Distinct x values with -h <= x < 0 (left) or 0 <= x <= h (right).
inline int support_count(const RdSample& sample, Side side, double h) {
  if (!(h > 0.0)) {
    throw InvalidParameterError("support_count: h must be > 0");
  }
  int n = 0;
  for (const auto& sp : sample.support) {
    const bool in = side == Side::left ? (sp.x >= -h && sp.x < 0.0)
                                       : (sp.x >= 0.0 && sp.x <= h);
    n += in ? 1 : 0;
  }
  return n;
}

// max_i x_i^2, the factor that converts smoothness constants to the
// rescaled-to-[-1,1] reporting convention.
inline ScaleInfo rescale_factor(const RdSample& sample) {
  if (sample.observations.empty()) {
    throw InvalidParameterError("rescale_factor: empty sample");
  }
  double m = 0.0;
  for (const auto& o : sample.observations) m = std::max(m, o.x * o.x);
  if (m == 0.0) {
    throw InvalidParameterError("rescale_factor: all x are zero");
  }
  return ScaleInfo{m};
}

// ---------------------------------------------------------------------------
// CSV ingestion. Header row with columns y, t, x (t optional in sharp
// designs, where it is derived from the assignment indicator). Rows that
// fail to parse are rejected individually and reported, never dropped
// silently.
// ---------------------------------------------------------------------------

struct RowDiagnostic {
  std::size_t line = 0;  // 1-based line number in the file
  std::string reason;
};

struct LoadOptions {
  double cutoff = 0.0;
  DesignKind design = DesignKind::sharp;
  bool preaggregated_t = false;
};

struct LoadResult {
  RdSample sample;
  std::size_t n_parsed = 0;
  std::vector<RowDiagnostic> rejected;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim_ws(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double* out) {
  const std::string t = trim_ws(s);
  if (t.empty()) return false;
  try {
    std::size_t pos = 0;
    *out = std::stod(t, &pos);
    return pos == t.size();
  } catch (...) {
    return false;
  }
}

}  // namespace detail

inline LoadResult load_csv(std::istream& in, const LoadOptions& opts) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty input");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
    line.erase(0, 3);  // UTF-8 BOM
  }
  int col_y = -1, col_t = -1, col_x = -1;
  {
    const auto header = detail::split_csv_line(line);
    for (std::size_t j = 0; j < header.size(); ++j) {
      const std::string name = detail::trim_ws(header[j]);
      if (name == "y") col_y = static_cast<int>(j);
      if (name == "t") col_t = static_cast<int>(j);
      if (name == "x") col_x = static_cast<int>(j);
    }
  }
  if (col_y < 0 || col_x < 0) {
    throw DataError("load_csv: header must contain columns y and x");
  }
  if (col_t < 0 && opts.design == DesignKind::fuzzy) {
    throw DataError("load_csv: fuzzy designs require a t column");
  }

  LoadResult res;
  std::vector<Observation> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim_ws(line).empty()) continue;
    ++res.n_parsed;
    const auto fields = detail::split_csv_line(line);
    const int needed = std::max(col_y, std::max(col_t, col_x));
    if (static_cast<int>(fields.size()) <= needed) {
      res.rejected.push_back({line_no, "too few fields"});
      continue;
    }
    Observation o;
    if (!detail::parse_double(fields[col_y], &o.y) || !std::isfinite(o.y)) {
      res.rejected.push_back({line_no, "missing or invalid y"});
      continue;
    }
    if (!detail::parse_double(fields[col_x], &o.x) || !std::isfinite(o.x)) {
      res.rejected.push_back({line_no, "missing or invalid x"});
      continue;
    }
    o.x -= opts.cutoff;
    if (col_t >= 0) {
      if (!detail::parse_double(fields[col_t], &o.t) || !std::isfinite(o.t)) {
        res.rejected.push_back({line_no, "missing or invalid t"});
        continue;
      }
      if (!opts.preaggregated_t && o.t != 0.0 && o.t != 1.0) {
        res.rejected.push_back({line_no, "t not in {0,1}"});
        continue;
      }
      if (opts.preaggregated_t && (o.t < 0.0 || o.t > 1.0)) {
        res.rejected.push_back({line_no, "t outside [0,1]"});
        continue;
      }
    } else {
      o.t = o.x >= 0.0 ? 1.0 : 0.0;
    }
    rows.push_back(o);
  }
  res.sample = make_sample(std::move(rows), opts.design, opts.cutoff,
                           opts.preaggregated_t);
  return res;
}

inline LoadResult load_csv_file(const std::string& path,
                                const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open " + path);
  return load_csv(in, opts);
}

}  // namespace rdme
