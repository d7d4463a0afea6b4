#ifndef BUNDLECHOICE_ERROR_HPP
#define BUNDLECHOICE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace bundlechoice {

/// Base of every error the library throws. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration or model specification (exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 2; }
};

/// Malformed or inconsistent data (exit code 3).
class DataError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

/// Numerical failure: non-finite values, failed factorizations (exit code 4).
class NumericError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 4; }
};

/// Filesystem failures (exit code 5).
class IoError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 5; }
};

/// Distribution parameters outside their support.
class DomainError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// API misuse such as summarizing an empty chain. Reported as a config error.
class UsageError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Runs f and rethrows any library error with `context` prepended, keeping
/// the exit-code category.
template <class F>
decltype(auto) with_context(const std::string& context, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError(context + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(context + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(context + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError(context + ": " + e.what());
    }
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_ERROR_HPP
