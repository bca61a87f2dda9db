#ifndef MPLYAP_ERROR_HPP
#define MPLYAP_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mplyap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public Error {
public:
    explicit SingularMatrixError(std::size_t column)
        : Error("singular matrix: zero pivot in column " + std::to_string(column)),
          column_(column) {}
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

// A non-finite value appeared while computing in a reduced format.
class OverflowError : public Error {
public:
    explicit OverflowError(std::string format)
        : Error("overflow while computing in " + format), format_(std::move(format)) {}
    const std::string& format() const noexcept { return format_; }

private:
    std::string format_;
};

// The sign-function Newton iteration blew up at a given step.
class DivergedError : public Error {
public:
    DivergedError(std::string format, std::size_t step)
        : Error("Newton iteration diverged in " + format + " at step " + std::to_string(step)),
          format_(std::move(format)), step_(step) {}
    const std::string& format() const noexcept { return format_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::string format_;
    std::size_t step_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace mplyap

#endif
