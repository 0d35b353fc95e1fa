#pragma once

#include <stdexcept>
#include <string>

namespace eqface {

// Base of every error raised by the library. Callers that only need a
// message can catch this; the subclasses mirror the distinct failure modes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EQFACE_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

EQFACE_DEFINE_ERROR(ZeroVector);
EQFACE_DEFINE_ERROR(DimensionMismatch);
EQFACE_DEFINE_ERROR(InvalidConfig);
EQFACE_DEFINE_ERROR(InsufficientData);
EQFACE_DEFINE_ERROR(InvalidQuality);
EQFACE_DEFINE_ERROR(MissingCache);
EQFACE_DEFINE_ERROR(DivergenceDetected);
EQFACE_DEFINE_ERROR(ShapeMismatch);
EQFACE_DEFINE_ERROR(IncompleteQualityTable);
EQFACE_DEFINE_ERROR(EmptyInput);
EQFACE_DEFINE_ERROR(ZeroQualityMass);
EQFACE_DEFINE_ERROR(InsufficientPairs);
EQFACE_DEFINE_ERROR(NoInGalleryQueries);
EQFACE_DEFINE_ERROR(FormatError);

#undef EQFACE_DEFINE_ERROR

}  // namespace eqface
