#ifndef BHKAM_REPORT_HPP
#define BHKAM_REPORT_HPP

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "bhkam/dynamics.hpp"

namespace bhkam {

// Fixed 17-significant-digit rendering, so CSV bytes round-trip doubles exactly.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CheckRow {
  std::string check;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline void write_results_csv(std::ostream& os, const std::vector<ExperimentRow>& rows, const std::string& params_hash) {
  os << "observable,t,mu,g,value,stderr,n_samples,params_hash\n";
  for (const auto& r : rows)
    os << r.observable << ',' << format_number(r.t) << ',' << format_number(r.mu) << ',' << format_number(r.g) << ','
       << format_number(r.value) << ',' << format_number(r.stderr_) << ',' << r.n_samples << ',' << params_hash << '\n';
}

inline void write_checks_csv(std::ostream& os, const std::vector<CheckRow>& checks) {
  os << "check,value,tolerance,passed\n";
  for (const auto& c : checks)
    os << c.check << ',' << format_number(c.value) << ',' << format_number(c.tolerance) << ',' << (c.passed ? 1 : 0)
       << '\n';
}

}  // namespace bhkam

#endif  // BHKAM_REPORT_HPP
