#pragma once

#include <stdexcept>
#include <string>

namespace sdmlab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct NonStochasticRow : Error { using Error::Error; };
struct NegativeProbability : Error { using Error::Error; };
struct NotIrreducible : Error { using Error::Error; };
struct Periodic : Error { using Error::Error; };
struct SupportViolation : Error { using Error::Error; };
struct EmptyDictionary : Error { using Error::Error; };
struct NegativeBound : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct CoverageError : Error { using Error::Error; };
struct KindMismatch : Error { using Error::Error; };
struct InvalidSplit : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct UntrainedEnsemble : Error { using Error::Error; };
struct EmptyBatch : Error { using Error::Error; };
struct EmptyAfterTerminalFilter : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

} // namespace sdmlab
