#ifndef FINESTRUCT_ERRORS_HPP
#define FINESTRUCT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace finestruct {

// Invalid physical parameters or option values.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Brighter/darker labeling is undefined because both branches of a
// polarization block carry (numerically) equal bright character.
class DegenerateMixingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Least-squares design matrix is singular or underdetermined.
class RankError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Fitted values are incompatible with the assumed model family.
class ModelMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// No real g-factor solution exists; carries the offending discriminant.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& what, double discriminant)
        : std::runtime_error(what), discriminant_(discriminant) {}
    double discriminant() const { return discriminant_; }

private:
    double discriminant_;
};

// Requested spectrum grid does not cover every spectral line.
class CoverageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed CSV or JSON input; line is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Filesystem failure; the message names the path involved.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace finestruct

#endif
