#pragma once

#include <stdexcept>
#include <string>

namespace specrec {

// Broad failure classes; the CLI maps each to an exit code.
enum class ErrorClass { usage = 1, data = 2, numerical = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
    ErrorClass error_class() const noexcept { return cls_; }

private:
    ErrorClass cls_;
};

#define SPECREC_DEFINE_ERROR(Name, Class)                                      \
    class Name : public Error {                                                \
    public:                                                                    \
        explicit Name(const std::string& what) : Error(ErrorClass::Class, what) {} \
    }

SPECREC_DEFINE_ERROR(ArgumentError, usage);
SPECREC_DEFINE_ERROR(UsageError, usage);
SPECREC_DEFINE_ERROR(ConfigError, usage);
SPECREC_DEFINE_ERROR(ParseError, data);
SPECREC_DEFINE_ERROR(PayloadError, data);
SPECREC_DEFINE_ERROR(UnsupportedFormatError, data);
SPECREC_DEFINE_ERROR(IoError, data);
SPECREC_DEFINE_ERROR(LoadError, data);
SPECREC_DEFINE_ERROR(ShapeError, data);
SPECREC_DEFINE_ERROR(CropError, data);
SPECREC_DEFINE_ERROR(NormalizationError, numerical);
SPECREC_DEFINE_ERROR(NumericalError, numerical);

#undef SPECREC_DEFINE_ERROR

} // namespace specrec
