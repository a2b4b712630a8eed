#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imdpm {

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text. Line and column are 1-based; zero means unknown.
class ParseError : public Error
{
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : Error(format(what, line, column)), _line(line), _column(column)
    {
    }

    [[nodiscard]] std::size_t line() const { return _line; }
    [[nodiscard]] std::size_t column() const { return _column; }

private:
    static std::string format(const std::string& what, std::size_t line, std::size_t column)
    {
        if (line == 0)
            return what;
        return std::to_string(line) + ":" + std::to_string(column) + ": " + what;
    }

    std::size_t _line;
    std::size_t _column;
};

// Well-formed input that violates a data-model invariant.
class ValidationError : public Error
{
public:
    using Error::Error;
};

// An action was applied in a state where its guard does not hold.
class GuardError : public Error
{
public:
    using Error::Error;
};

// Technical evidence cannot explain medical evidence that precedes it.
class TimelineError : public Error
{
public:
    using Error::Error;
};

} // namespace imdpm
