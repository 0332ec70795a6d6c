#pragma once

#include <stdexcept>
#include <string>

namespace trialz {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (bad header, unparsable field, ...).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Cross-file consistency violation (e.g. outcome without a trial).
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Precondition on sample size or data shape not satisfied.
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace trialz
