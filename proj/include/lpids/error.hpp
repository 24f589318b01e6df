#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace lpids {

#ifdef LPIDS_VERSION
inline constexpr std::string_view tool_version = LPIDS_VERSION;
#else
inline constexpr std::string_view tool_version = "0.1.0";
#endif

/// A caller-supplied value violates an operation's precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not deliver its contract (non-finite input,
/// singular solve after retries, brackets that do not shrink).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigenvectors are not localized enough for the requested diagnostic.
class LocalizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

using WarningHandler = std::function<void(std::string_view)>;

namespace detail {
inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return handler;
}
}  // namespace detail

/// Installs a sink for library warnings and returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  return std::exchange(detail::warning_handler(), std::move(handler));
}

inline void warn(std::string_view message) {
  if (auto& handler = detail::warning_handler()) handler(message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace lpids
