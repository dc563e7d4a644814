#pragma once

#include <stdexcept>
#include <string>

namespace flap {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shapes of two objects do not line up (column counts, index bounds, ...).
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// A series has no variation where variation is required.
class DegenerateSeriesError : public Error {
public:
    explicit DegenerateSeriesError(const std::string& msg) : Error(msg) {}
};

/// Two weight matrices carry conflicting centering/scaling transforms.
class IncompatibleTransformError : public Error {
public:
    explicit IncompatibleTransformError(const std::string& msg) : Error(msg) {}
};

/// Covariance matrix is not positive definite where PD is required.
class CovarianceNotPDError : public Error {
public:
    explicit CovarianceNotPDError(const std::string& msg) : Error(msg) {}
};

/// Not enough observations to carry out an estimation.
class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& msg) : Error(msg) {}
};

/// Residual matrix carries no usable variation.
class DegenerateResidualsError : public Error {
public:
    explicit DegenerateResidualsError(const std::string& msg) : Error(msg) {}
};

/// Inputs to a nested-sequence check are not actually nested.
class NestingError : public Error {
public:
    explicit NestingError(const std::string& msg) : Error(msg) {}
};

/// A (time, series) cell appears more than once in a long-format file.
class DuplicateCellError : public Error {
public:
    explicit DuplicateCellError(const std::string& msg) : Error(msg) {}
};

/// Cells are missing from an input panel; locations are listed in the message.
class MissingDataError : public Error {
public:
    explicit MissingDataError(const std::string& msg) : Error(msg) {}
};

/// Run configuration is invalid or inconsistent.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// A VAR process is explosive where stability is required.
class StabilityError : public Error {
public:
    explicit StabilityError(const std::string& msg) : Error(msg) {}
};

/// Scores are constant across methods; ranks carry no information.
class DegenerateRanksError : public Error {
public:
    explicit DegenerateRanksError(const std::string& msg) : Error(msg) {}
};

/// Numerical failure not covered by a more specific class.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

}  // namespace flap
