#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmat {

// Base of every error the library throws. Subclasses map to the error kinds
// each operation names in its contract.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error { public: using Error::Error; };
class DimensionError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class DomainError : public Error { public: using Error::Error; };
class UsageError : public Error { public: using Error::Error; };
class TrainingError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class StratificationError : public ValidationError { public: using ValidationError::ValidationError; };

}  // namespace dmat
