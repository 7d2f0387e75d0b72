#pragma once

#include <stdexcept>
#include <string>

namespace piv {

// Invalid caller input (parameters, configs, series that violate their
// invariants) is reported with std::invalid_argument / std::domain_error.
// The two types below cover the remaining failure classes.

/// Malformed or missing input data (files, rows, rate lookups).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to produce a trustworthy value.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace piv
