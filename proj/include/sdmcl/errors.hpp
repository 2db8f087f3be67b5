#pragma once

#include <stdexcept>
#include <string>

namespace sdmcl {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define SDMCL_DEFINE_ERROR(NAME)                  \
    struct NAME : Error {                         \
        using Error::Error;                       \
    }

SDMCL_DEFINE_ERROR(DimensionMismatch);
SDMCL_DEFINE_ERROR(ShapeMismatch);
SDMCL_DEFINE_ERROR(ZeroVector);
SDMCL_DEFINE_ERROR(IndexOutOfRange);
SDMCL_DEFINE_ERROR(NotNormalized);
SDMCL_DEFINE_ERROR(NonFiniteInput);
SDMCL_DEFINE_ERROR(StaleTrace);
SDMCL_DEFINE_ERROR(EmptyData);
SDMCL_DEFINE_ERROR(IndivisibleClasses);
SDMCL_DEFINE_ERROR(BadMagic);
SDMCL_DEFINE_ERROR(CountMismatch);
SDMCL_DEFINE_ERROR(Truncated);
SDMCL_DEFINE_ERROR(LabelOutOfRange);
SDMCL_DEFINE_ERROR(IoError);
SDMCL_DEFINE_ERROR(ConfigError);

#undef SDMCL_DEFINE_ERROR

}  // namespace sdmcl
