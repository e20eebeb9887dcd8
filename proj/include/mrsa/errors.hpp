#pragma once

#include <stdexcept>
#include <string>

namespace mrsa {

// Invalid construction parameters (divisibility, ranges, shapes).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A participation vector broke the ||p||_0 in {0, K} selection contract.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Rounds appended out of order.
class OrderingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Metric requested on a ledger where it is not defined (e.g. all-zero).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Local training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t round)
      : std::runtime_error(what), round_(round) {}
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

}  // namespace mrsa
