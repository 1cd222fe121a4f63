#pragma once

#include <stdexcept>
#include <string>

namespace esonlp {

/// Bad input data: malformed files, label violations, inconsistent corpora.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed arguments that violate an operation's preconditions.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace esonlp
