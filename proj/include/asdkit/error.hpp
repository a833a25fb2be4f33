#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace asdkit {

// Base for all toolkit errors. `kind()` is the stable machine-readable name
// printed by the CLI, one finding per line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define ASDKIT_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

ASDKIT_DEFINE_ERROR(ParseError);
ASDKIT_DEFINE_ERROR(ValidationError);
ASDKIT_DEFINE_ERROR(DanglingReference);
ASDKIT_DEFINE_ERROR(DimensionMismatch);
ASDKIT_DEFINE_ERROR(LengthMismatch);
ASDKIT_DEFINE_ERROR(TrackMismatch);
ASDKIT_DEFINE_ERROR(NoPositives);
ASDKIT_DEFINE_ERROR(MissingQuality);
ASDKIT_DEFINE_ERROR(TooFewTracks);
ASDKIT_DEFINE_ERROR(InvalidConfig);
ASDKIT_DEFINE_ERROR(SpanOutOfRange);
ASDKIT_DEFINE_ERROR(MissingLabel);
ASDKIT_DEFINE_ERROR(MissingLabels);
ASDKIT_DEFINE_ERROR(NoVisibleIdentity);
ASDKIT_DEFINE_ERROR(IoError);

#undef ASDKIT_DEFINE_ERROR

}  // namespace asdkit
