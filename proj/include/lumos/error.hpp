#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lumos {

/// Failure categories raised by the library. Each maps onto one CLI exit code.
enum class Errc {
  MissingView,
  ShapeMismatch,
  NotSquareGrid,
  InfeasiblePattern,
  BadCount,
  NonPositiveDistance,
  OutOfPupil,
  BadRange,
  ConfigMismatch,
  LengthMismatch,
  SlopeTooLarge,
  DomainError,
  NonScalarLoss,
  BadMode,
  NonNegativeBetaRequired,
  ImageTooSmall,
  NonFiniteLoss,
  BadConfig,
  Io,
  BadCheckpoint,
};

std::string_view to_string(Errc code);

/// CLI exit code: 1 usage, 2 data, 3 numerical.
int exit_code(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace lumos
