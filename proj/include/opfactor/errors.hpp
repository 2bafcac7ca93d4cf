// Copyright (c) 2026 the opfactor authors
// SPDX-License-Identifier: Apache-2.0

#ifndef OPFACTOR_ERRORS_HPP
#define OPFACTOR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace opfactor {

/// Base class for every error raised by the workbench.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// -- linalg ------------------------------------------------------------

class ConvergenceFailure : public Error {
public:
    using Error::Error;
};

class EmptyComplement : public Error {
public:
    using Error::Error;
};

// -- block operators ---------------------------------------------------

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class InfiniteFiber : public Error {
public:
    using Error::Error;
};

class NotTriangular : public Error {
public:
    using Error::Error;
};

// -- decompositions ----------------------------------------------------

/// The constrained minimum exceeded the allowance at some step of the
/// almost-null search: the truncation behaves like a semi-Fredholm operator.
class SemiFredholmObstruction : public Error {
public:
    SemiFredholmObstruction(const std::string& what, int step_, double constrained_min_)
        : Error(what), step(step_), constrained_min(constrained_min_) {}
    int step;
    double constrained_min;
};

class SpaceTooSmall : public Error {
public:
    using Error::Error;
};

class DegenerateReduction : public Error {
public:
    using Error::Error;
};

// -- quasi-nilpotent factorizations --------------------------------------

class SplitTooShallow : public Error {
public:
    using Error::Error;
};

class NotEssentiallySingular : public Error {
public:
    using Error::Error;
};

class RangeInclusionFailed : public Error {
public:
    RangeInclusionFailed(const std::string& what, double projection_norm_)
        : Error(what), projection_norm(projection_norm_) {}
    double projection_norm;
};

// -- nilpotent factorizations --------------------------------------------

class Infeasible : public Error {
public:
    using Error::Error;
};

class KernelEmpty : public Error {
public:
    using Error::Error;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

// -- i/o -----------------------------------------------------------------

class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace opfactor

#endif
