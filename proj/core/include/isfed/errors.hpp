#pragma once

#include <stdexcept>
#include <string>

namespace isfed {

// Base class for all domain errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NegativeEntryError : Error { using Error::Error; };
struct NotNormalizedError : Error { using Error::Error; };
struct EmptyProbabilityError : Error { using Error::Error; };

struct InclusionOverflowError : Error { using Error::Error; };
struct BatchTooLargeError : Error { using Error::Error; };
struct TooLargeToEnumerateError : Error { using Error::Error; };

struct ZeroProbabilityDrawnError : Error { using Error::Error; };
struct MissingMomentsError : Error { using Error::Error; };
struct InvalidPairMatrixError : Error { using Error::Error; };

struct InvalidCovarianceError : Error { using Error::Error; };
struct SingularSystemError : Error { using Error::Error; };
struct IndexOutOfRangeError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DimensionMismatchError : Error { using Error::Error; };
struct PoolTooSmallError : Error { using Error::Error; };

struct MassOverflowError : Error { using Error::Error; };

struct EmptyTestSetError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace isfed
