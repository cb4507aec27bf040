#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lgi {

// Incompatible tensor shapes or out-of-range indices.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed tensor / parameter files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A configuration value violates an invariant.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// An operation was requested in a state that cannot serve it (e.g. deploy without fusion).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed JSON text; carries a 1-based line/column.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : std::runtime_error(what), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

} // namespace lgi
