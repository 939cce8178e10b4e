#pragma once

#include <stdexcept>
#include <string>

namespace maxnl {

enum class ErrorKind {
  invalid_argument,
  layout_mismatch,
  envelope_violation,
  resonance,
  non_convergence,
  data_too_large,
  fit_rejected,
  zero_signal,
  construction,
  io,
  config,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when Picard iteration stops contracting; carries the largest data
// scale (relative to the requested one) that was observed to converge.
class DataTooLarge : public Error {
 public:
  DataTooLarge(const std::string& what, double achievable_scale)
      : Error(ErrorKind::data_too_large, what), achievable_scale_(achievable_scale) {}
  double achievable_scale() const { return achievable_scale_; }

 private:
  double achievable_scale_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace maxnl
