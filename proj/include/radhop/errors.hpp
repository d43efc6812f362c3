#pragma once

#include <stdexcept>

namespace radhop {

// Base of all pipeline errors. The three families map onto CLI exit codes:
// ConfigError -> 2, DataError -> 3, DegenerateError -> 4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration or parameters supplied by the caller.
struct ConfigError : Error { using Error::Error; };

// Malformed, missing or inconsistent input data.
struct DataError : Error { using Error::Error; };
struct FormatError : DataError { using DataError::DataError; };
struct IngestError : DataError { using DataError::DataError; };
struct IoError : DataError { using DataError::DataError; };
struct ShapeError : DataError { using DataError::DataError; };

// Inputs that are structurally valid but unusable for the requested fit.
struct DegenerateError : Error { using Error::Error; };
struct InsufficientData : DegenerateError { using DegenerateError::DegenerateError; };
struct DegenerateLabels : DegenerateError { using DegenerateError::DegenerateError; };
struct DegenerateRoi : DegenerateError { using DegenerateError::DegenerateError; };
struct DegenerateGroundTruth : DegenerateError { using DegenerateError::DegenerateError; };
struct EmptyStage : DegenerateError { using DegenerateError::DegenerateError; };
struct PlacementError : DegenerateError { using DegenerateError::DegenerateError; };

} // namespace radhop
