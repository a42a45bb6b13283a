#pragma once

// CSV writers with fixed headers. Numbers use %.10g so identical inputs
// give byte-identical files.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "paretoloc/crlb.hpp"
#include "paretoloc/simulation.hpp"

namespace paretoloc {

[[nodiscard]] inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const RunResult& r, const std::vector<std::string>& estimators) {
  os << "k,truth_x1,truth_x2";
  for (const auto& e : estimators) os << ',' << e << "_x1," << e << "_x2," << e << "_err";
  os << '\n';
  for (const auto& row : r.trace) {
    os << row.k << ',' << format_number(row.truth.x()) << ',' << format_number(row.truth.y());
    for (const auto& e : estimators) {
      const auto it = row.estimates.find(e);
      if (it == row.estimates.end()) {
        os << ",nan,nan,nan";
        continue;
      }
      os << ',' << format_number(it->second.x()) << ',' << format_number(it->second.y()) << ','
         << format_number((it->second - row.truth).norm());
    }
    os << '\n';
  }
}

inline void write_summary_row(std::ostream& os, const EstimatorSummary& s) {
  os << s.name << ',' << format_number(s.rmse) << ',' << format_number(s.p95) << ',' << s.runs << ',' << s.excluded << '\n';
}

inline void write_summary_csv(std::ostream& os, const RunResult& r) {
  os << "estimator,rmse_m,p95_err_m,runs,excluded\n";
  for (const auto& s : r.estimators) write_summary_row(os, s);
}

inline void write_sweep_csv(std::ostream& os, SweepParameter p, const std::vector<SweepPoint>& points) {
  os << "param,value,estimator,rmse_m,p95_err_m,runs,excluded\n";
  for (const auto& pt : points) {
    for (const auto& s : pt.result.estimators) {
      os << to_string(p) << ',' << format_number(pt.value) << ',';
      write_summary_row(os, s);
    }
  }
}

struct CrlbRow {
  int k = 0;
  double parcrlb = 0, pcrlb = 0, pcrlb_lb = 0, pcrlb_ub = 0;
};

inline void write_crlb_csv(std::ostream& os, const std::vector<CrlbRow>& rows) {
  os << "k,parcrlb,pcrlb,pcrlb_lb,pcrlb_ub\n";
  for (const auto& r : rows) {
    os << r.k << ',' << format_number(r.parcrlb) << ',' << format_number(r.pcrlb) << ',' << format_number(r.pcrlb_lb) << ','
       << format_number(r.pcrlb_ub) << '\n';
  }
}

}  // namespace paretoloc
