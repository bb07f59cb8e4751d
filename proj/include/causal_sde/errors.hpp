#pragma once

#include <stdexcept>
#include <string>

namespace causal_sde {

/// Invalid user input: malformed config, bad expression, unknown label.
/// The CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A coefficient evaluated to a non-finite value.
class CoefficientOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A coefficient was evaluated outside its domain (e.g. a negative reaction
/// rate). Simulation treats this like an overflow and freezes the path.
class CoefficientDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveSemidefinite : public std::invalid_argument {
 public:
  NotPositiveSemidefinite() : std::invalid_argument("not positive semidefinite") {}
};

class IntegratorInterventionError : public std::invalid_argument {
 public:
  IntegratorInterventionError()
      : std::invalid_argument(
            "interventions on the driving process are not supported; only state coordinates "
            "can be intervened on") {}
};

class SingularReversionMatrix : public std::domain_error {
 public:
  SingularReversionMatrix()
      : std::domain_error("intervened reversion matrix singular; no OU closed form") {}
};

class SemCycleError : public std::invalid_argument {
 public:
  SemCycleError() : std::invalid_argument("post-intervention graph is not a DAG") {}
};

}  // namespace causal_sde
