#ifndef FINKIT_ERRORS_HPP
#define FINKIT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

/**
 * @file errors.hpp
 * @brief Exception types thrown across the toolkit.
 *
 * Every loader and algorithm reports failure through one of these types, so
 * callers can tell bad input (parse/format/validation) apart from bad
 * parameters and from undefined results.
 */

namespace finkit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A text record could not be parsed. `line()` is 1-based.
class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Parsed values violate a type invariant (duplicate ids, negative relevance, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Binary payload is truncated, mis-sized or otherwise corrupt.
class FormatError : public Error {
public:
    using Error::Error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

/// Not enough input items to satisfy a requested sample size.
class CapacityError : public Error {
public:
    CapacityError(const std::string& what, std::size_t available_high, std::size_t available_low)
        : Error(what), available_high_(available_high), available_low_(available_low) {}

    std::size_t available_high() const noexcept { return available_high_; }
    std::size_t available_low() const noexcept { return available_low_; }

private:
    std::size_t available_high_;
    std::size_t available_low_;
};

/// A metric is undefined for the given input (e.g. fewer than two clusters).
class MetricUndefinedError : public Error {
public:
    using Error::Error;
};

/// An external judge could not be reached or answered unusably.
class JudgeError : public Error {
public:
    JudgeError(const std::string& what, std::string transcript = {})
        : Error(what), transcript_(std::move(transcript)) {}

    const std::string& transcript() const noexcept { return transcript_; }

private:
    std::string transcript_;
};

/// Transport-level failure (connection refused, HTTP error). Retryable.
class JudgeTransportError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage failed; `stage()` names it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

} // namespace finkit

#endif
