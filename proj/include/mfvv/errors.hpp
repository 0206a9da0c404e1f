#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mfvv {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A spec failed one of its declared assumptions; `what()` names it.
struct RejectedSpec : Error {
  using Error::Error;
};

/// A user callback produced NaN or infinity.
struct NonFiniteEvaluation : Error {
  using Error::Error;
};

struct UnknownScenario : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct SizeLimit : Error {
  using Error::Error;
};

struct GridMismatch : Error {
  using Error::Error;
};

struct WitnessNotLipschitz : Error {
  using Error::Error;
};

/// A forward trajectory left the sanity ball (|X| > 1e8).
struct BlowUp : Error {
  using Error::Error;
};

struct CflViolation : Error {
  using Error::Error;
};

struct MassLoss : Error {
  using Error::Error;
};

struct RegressionSingular : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// Iterative solve ran out of iterations; carries the residual history.
struct NoConvergence : Error {
  std::vector<double> residual_history;
  NoConvergence(const std::string& msg, std::vector<double> history)
      : Error(msg), residual_history(std::move(history)) {}
};

}  // namespace mfvv
