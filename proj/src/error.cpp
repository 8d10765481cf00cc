#include "lumos/error.hpp"

namespace lumos {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MissingView: return "MissingView";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NotSquareGrid: return "NotSquareGrid";
    case Errc::InfeasiblePattern: return "InfeasiblePattern";
    case Errc::BadCount: return "BadCount";
    case Errc::NonPositiveDistance: return "NonPositiveDistance";
    case Errc::OutOfPupil: return "OutOfPupil";
    case Errc::BadRange: return "BadRange";
    case Errc::ConfigMismatch: return "ConfigMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::SlopeTooLarge: return "SlopeTooLarge";
    case Errc::DomainError: return "DomainError";
    case Errc::NonScalarLoss: return "NonScalarLoss";
    case Errc::BadMode: return "BadMode";
    case Errc::NonNegativeBetaRequired: return "NonNegativeBetaRequired";
    case Errc::ImageTooSmall: return "ImageTooSmall";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::BadConfig: return "BadConfig";
    case Errc::Io: return "Io";
    case Errc::BadCheckpoint: return "BadCheckpoint";
  }
  return "Unknown";
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::BadConfig:
    case Errc::BadMode:
    case Errc::BadCount:
    case Errc::InfeasiblePattern:
      return 1;
    case Errc::NonFiniteLoss:
    case Errc::DomainError:
    case Errc::NonScalarLoss:
      return 3;
    default:
      return 2;
  }
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace lumos
