#pragma once

#include <stdexcept>
#include <string>

namespace riskbal {

// Base of every error the library raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input that fails validation: bad schema, unparsable cells, values out of domain.
class ValidationError : public Error {
public:
    using Error::Error;
};

class SchemaError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t row, std::string column)
        : ValidationError(what), row_(row), column_(std::move(column)) {}

    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DegenerateColumnError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class FeasibilityError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class PoolingError : public Error {
public:
    using Error::Error;
};

class SingularModelError : public Error {
public:
    using Error::Error;
};

}  // namespace riskbal
