#pragma once

#include <stdexcept>
#include <string>

namespace atelier {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied argument violates a precondition (shape, range, simplex).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Numerical failure: non-finite data, degenerate covariance.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Layer schema of a descriptor, store or codec does not match its counterpart.
class SchemaMismatch : public Error {
public:
    using Error::Error;
};

/// Persisted file is truncated, fails its checksum, or is otherwise unreadable.
class CorruptionError : public Error {
public:
    using Error::Error;
};

/// Persisted file carries a format version this build cannot read.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Pretrained codec archive could not be loaded.
class CodecLoadError : public Error {
public:
    using Error::Error;
};

}  // namespace atelier
