#ifndef BHKAM_ERRORS_HPP
#define BHKAM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bhkam {

// Invalid configuration or parameter values. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A requested object would exceed a configured size limit (space dimension,
// move enumeration, cluster enumeration, quadrature budget). Exit code 3.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An operator range grew past the configured cap during the recursive
// construction.
class RangeCapError : public CapacityError {
 public:
  RangeCapError(const std::string& what, int order) : CapacityError(what), order_(order) {}
  int order() const { return order_; }

 private:
  int order_;
};

}  // namespace bhkam

#endif  // BHKAM_ERRORS_HPP
