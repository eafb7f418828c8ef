#pragma once

#include <stdexcept>
#include <string>

namespace qsid {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* code() const noexcept { return "Error"; }
};

#define QSID_DEFINE_ERROR(Name)                                       \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    const char* code() const noexcept override { return #Name; }      \
  };

QSID_DEFINE_ERROR(InvalidArgument)
QSID_DEFINE_ERROR(DegenerateSpectrum)
QSID_DEFINE_ERROR(RejectionExhausted)
QSID_DEFINE_ERROR(RankDeficientBasis)
QSID_DEFINE_ERROR(DegenerateData)
QSID_DEFINE_ERROR(NoPeaks)
QSID_DEFINE_ERROR(OptimizerDiverged)
QSID_DEFINE_ERROR(InconsistentFrequencies)
QSID_DEFINE_ERROR(AmbiguousStructure)
QSID_DEFINE_ERROR(FitDiverged)
QSID_DEFINE_ERROR(GaugeUnfixable)
QSID_DEFINE_ERROR(ParseError)

#undef QSID_DEFINE_ERROR

}  // namespace qsid
