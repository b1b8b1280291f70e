#pragma once

#include <stdexcept>

namespace pdpkit {

/// Base class for pdpkit contract and numeric errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct ConvergenceFailure : Error { using Error::Error; };
struct NotPositiveDefinite : Error { using Error::Error; };
struct WrongRank : Error { using Error::Error; };
struct RankTooLarge : Error { using Error::Error; };
struct RebaseDegenerate : Error { using Error::Error; };
struct NotApplicable : Error { using Error::Error; };

/// A constructed counterexample failed its own re-check. This is an internal
/// bug surfacing, never a verdict.
struct VerificationFailure : Error { using Error::Error; };

} // namespace pdpkit
