#pragma once

#include <stdexcept>
#include <string>

namespace hdivmm {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Singular systems, non-finite values, failed residual checks.
class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Config schema or cross-reference violation.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class MeshErrorKind {
    MalformedHeader,
    InconsistentCounts,
    DegenerateCell,
    Nonconforming,
};

class MeshError : public Error {
public:
    MeshError(MeshErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    MeshErrorKind kind() const noexcept { return kind_; }

private:
    MeshErrorKind kind_;
};

} // namespace hdivmm
