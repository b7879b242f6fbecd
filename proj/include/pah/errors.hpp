#pragma once

#include <stdexcept>
#include <string>

namespace pah {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PAH_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

PAH_DEFINE_ERROR(DimensionError);
PAH_DEFINE_ERROR(ContractError);
PAH_DEFINE_ERROR(NumericError);
PAH_DEFINE_ERROR(InsufficientBatchError);
PAH_DEFINE_ERROR(DegenerateMapError);
PAH_DEFINE_ERROR(InvalidBoxError);
PAH_DEFINE_ERROR(InsufficientPointsError);
PAH_DEFINE_ERROR(DegenerateFeaturesError);
PAH_DEFINE_ERROR(LabelError);
PAH_DEFINE_ERROR(DegenerateDescriptorError);
PAH_DEFINE_ERROR(UndefinedMetricError);
PAH_DEFINE_ERROR(ConfigError);
PAH_DEFINE_ERROR(ParseError);
PAH_DEFINE_ERROR(EmptyDatasetError);
PAH_DEFINE_ERROR(IoError);

#undef PAH_DEFINE_ERROR

}  // namespace pah
