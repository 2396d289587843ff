#pragma once

#include <stdexcept>
#include <string>

namespace ccprisk {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    success = 0,
    input_error = 2,
    model_error = 3,
    tolerance_error = 4,
};

class Error : public std::runtime_error {
  public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

  private:
    ExitCode code_;
};

// Malformed files, bad flags, parse failures.
class InputError : public Error {
  public:
    explicit InputError(const std::string& what) : Error(ExitCode::input_error, what) {}
};

// Violated model preconditions (alpha <= 1, exhausted fund, ...).
class ModelError : public Error {
  public:
    explicit ModelError(const std::string& what) : Error(ExitCode::model_error, what) {}
};

class FundExhaustedError : public ModelError {
  public:
    explicit FundExhaustedError(const std::string& what) : ModelError("fund exhausted: " + what) {}
};

// Numerical tolerance or scenario-exhaustion limits exceeded.
class ToleranceError : public Error {
  public:
    explicit ToleranceError(const std::string& what) : Error(ExitCode::tolerance_error, what) {}
};

template <typename E = ModelError>
inline void require(bool condition, const std::string& message) {
    if (!condition)
        throw E(message);
}

} // namespace ccprisk
