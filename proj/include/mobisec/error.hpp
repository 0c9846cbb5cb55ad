#pragma once

#include <stdexcept>
#include <string>

namespace mobisec {

// Bad input: configs, records, parameters. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TimeRegression : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

class StaleTimer : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

// Streams handed to replay/report are truncated, reordered or unlabeled.
class StreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mobisec
