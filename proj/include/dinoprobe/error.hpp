#pragma once

#include <stdexcept>
#include <string>

namespace dinoprobe {

/// Failure classes. The numeric values are the CLI exit codes.
enum class ErrorCategory : int {
    config = 2,
    data = 3,
    numeric = 4,
    io = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

/// Bad user-supplied settings or arguments (also invalid call arguments).
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

/// Input data violates an invariant (bad labels, too few samples, malformed rows...).
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

/// Missing/unreadable/unwritable files and malformed containers.
struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

} // namespace dinoprobe
