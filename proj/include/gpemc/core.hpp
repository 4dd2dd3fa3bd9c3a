#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace gpemc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Rank-3 tensor stored as slices. Slice conventions are documented where used.
using Tensor3 = std::vector<Matrix>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define GPEMC_ERROR(Name)                   \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

GPEMC_ERROR(ShapeMismatch);
GPEMC_ERROR(IllConditioned);
GPEMC_ERROR(TooFewPoints);
GPEMC_ERROR(MissingPerDatum);
GPEMC_ERROR(SolverFailure);
GPEMC_ERROR(DegenerateKernel);
GPEMC_ERROR(NonFiniteGradient);
GPEMC_ERROR(FixedPointDivergence);
GPEMC_ERROR(SingularUpdate);
GPEMC_ERROR(RejectionBudgetExhausted);
GPEMC_ERROR(AllDegenerate);
GPEMC_ERROR(Unsupported);

#undef GPEMC_ERROR

/// Configuration problem located by a JSON pointer.
class ConfigError : public Error {
 public:
  ConfigError(std::string pointer, const std::string& what)
      : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace gpemc
