#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssdg {

// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Zero-norm vectors and similar inputs where an operation is undefined.
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Infeasible or inconsistent configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation's precondition (e.g. unlabeled example in a
// supervised batch).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingPrototypeError : public std::runtime_error {
 public:
  MissingPrototypeError(int domain, int cls)
      : std::runtime_error("no labeled examples for prototype cell (domain " +
                           std::to_string(domain) + ", class " + std::to_string(cls) + ")"),
        domain_(domain),
        cls_(cls) {}
  int domain() const noexcept { return domain_; }
  int cls() const noexcept { return cls_; }

 private:
  int domain_;
  int cls_;
};

// Raised by the trainer when a loss term turns NaN/inf.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ssdg
