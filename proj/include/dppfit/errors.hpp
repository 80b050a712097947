#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dppfit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class PointOutsideWindow : public Error {
public:
    using Error::Error;
};

/// Kernel model fails an existence condition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Spectral truncation of the sampler could not retain the requested mass.
class TruncationError : public Error {
public:
    using Error::Error;
};

/// Unbounded cubature directions need a radius larger than the configured cap.
class TruncationFailure : public Error {
public:
    using Error::Error;
};

class EmptyErosion : public Error {
public:
    using Error::Error;
};

class ZeroIntensity : public Error {
public:
    using Error::Error;
};

class NotInvertible : public Error {
public:
    NotInvertible(const std::string& what, double condition_number)
        : Error(what), condition_number_(condition_number) {}
    [[nodiscard]] double condition_number() const noexcept { return condition_number_; }

private:
    double condition_number_;
};

/// A theoretical statistic is nonpositive where a negative power is taken.
class NonPositiveStatistic : public Error {
public:
    using Error::Error;
};

/// An empirical curve is negative where a fractional power is taken.
class NegativeStatistic : public Error {
public:
    using Error::Error;
};

class OptimizerFailure : public Error {
public:
    using Error::Error;
};

class InvalidSpec : public Error {
public:
    using Error::Error;
};

class StudyAborted : public Error {
public:
    using Error::Error;
};

/// A diagnostic is undefined for the given data (e.g. zero variance).
class UndefinedStatistic : public Error {
public:
    using Error::Error;
};

}  // namespace dppfit
