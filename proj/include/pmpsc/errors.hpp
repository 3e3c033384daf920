#pragma once

#include <stdexcept>
#include <string>

namespace pmpsc {

// Base for everything the library throws. Subclasses exist so callers can
// catch the specific failure they know how to recover from.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PMPSC_DECLARE_ERROR(Name)        \
  class Name : public Error {            \
   public:                               \
    explicit Name(const std::string& w)  \
        : Error(#Name ": " + w) {}       \
  }

PMPSC_DECLARE_ERROR(DimensionMismatch);
PMPSC_DECLARE_ERROR(InvalidArgument);
PMPSC_DECLARE_ERROR(EmptySet);
PMPSC_DECLARE_ERROR(EmptyTightening);
PMPSC_DECLARE_ERROR(NotABox);
PMPSC_DECLARE_ERROR(Unstable);
PMPSC_DECLARE_ERROR(NoConvergence);
PMPSC_DECLARE_ERROR(IllConditioned);
PMPSC_DECLARE_ERROR(Singular);
PMPSC_DECLARE_ERROR(InfeasibleAtCap);
PMPSC_DECLARE_ERROR(OriginInfeasible);
PMPSC_DECLARE_ERROR(CapReached);
PMPSC_DECLARE_ERROR(InitiallyInfeasible);
PMPSC_DECLARE_ERROR(NoPreviousPlan);
PMPSC_DECLARE_ERROR(LengthMismatch);
PMPSC_DECLARE_ERROR(ExcitationUnsafe);
PMPSC_DECLARE_ERROR(IoError);
PMPSC_DECLARE_ERROR(DegenerateRewards);
PMPSC_DECLARE_ERROR(ConfigError);

#undef PMPSC_DECLARE_ERROR

#define PMPSC_THROW_UNLESS(cond, ErrType, msg) \
  do {                                         \
    if (!(cond)) throw ErrType(msg);           \
  } while (0)

}  // namespace pmpsc
