#pragma once

#include <stdexcept>
#include <string>

namespace chm {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file does not follow its documented container format.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Shapes or band counts disagree (between bands, scenes, or grids).
class StructuralError : public Error {
public:
    using Error::Error;
};

/// A precondition on caller-supplied data or parameters does not hold.
class InputError : public Error {
public:
    using Error::Error;
};

/// Aggregation was requested over an empty set.
class EmptyReportError : public InputError {
public:
    using InputError::InputError;
};

/// A computation produced a non-finite result.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace chm
