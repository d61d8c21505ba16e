#pragma once

#include <stdexcept>
#include <string>

namespace ecfem {

/// Base class of all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (bad count, bad order, ...).
class PreconditionViolation : public Error {
public:
    using Error::Error;
};

class DegenerateTriangle : public Error {
public:
    using Error::Error;
};

class LayersTooLarge : public Error {
public:
    using Error::Error;
};

class BranchAmbiguous : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class MaxIterations : public Error {
public:
    using Error::Error;
};

class NewtonDiverged : public Error {
public:
    using Error::Error;
};

class InadmissibleStart : public Error {
public:
    using Error::Error;
};

class InsufficientLevels : public Error {
public:
    using Error::Error;
};

class IdentityMismatch : public Error {
public:
    using Error::Error;
};

class CutoffOutsideDomain : public Error {
public:
    using Error::Error;
};

class IndexMismatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace ecfem
