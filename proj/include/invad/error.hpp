#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace invad {

// Argument outside an operation's domain (bad shape, bad range, bad mode).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite value produced or consumed by a numerical routine.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Metric undefined for the given input (e.g. a single class present).
class UndefinedMetric : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Malformed binary or text file. offset is the byte offset where parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& message, std::size_t offset)
        : std::runtime_error(message + " (at byte " + std::to_string(offset) + ")"), message_(message), offset_(offset) {}

    const std::string& message() const noexcept { return message_; }
    std::size_t offset() const noexcept { return offset_; }

private:
    std::string message_;
    std::size_t offset_;
};

// Bad or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace invad
