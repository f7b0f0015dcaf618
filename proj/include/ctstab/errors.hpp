#ifndef CTSTAB_ERRORS_HPP
#define CTSTAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ctstab {

/// Caller-supplied values violate a contract (dimensions, finiteness, symmetry).
class input_error : public std::invalid_argument {
 public:
  explicit input_error(const std::string& what) : std::invalid_argument(what) {}
};

/// Run configuration is inconsistent (grid misalignment, bad sweep file).
class config_error : public std::invalid_argument {
 public:
  explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical routine failed to reach its tolerance.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

/// Riccati solve failure. Downstream this is a domain outcome (the model the
/// solver was handed is, numerically, not stabilizable), not a crash.
class care_error : public std::runtime_error {
 public:
  enum class kind { no_solution, numerical_failure, indefinite_solution };

  care_error(kind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
  kind failure_kind() const { return kind_; }

 private:
  kind kind_;
};

}  // namespace ctstab

#endif  // CTSTAB_ERRORS_HPP
