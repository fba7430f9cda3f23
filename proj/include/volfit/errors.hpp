#pragma once

#include <stdexcept>
#include <string>

namespace volfit {

// Broad failure classes; the CLI maps them to exit codes 1, 2 and 3.
enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define VOLFIT_DEFINE_ERROR(Name, Kind)                                           \
    class Name : public Error {                                                   \
    public:                                                                       \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}  \
    };

VOLFIT_DEFINE_ERROR(ConfigError, Config)
VOLFIT_DEFINE_ERROR(IoError, Data)
VOLFIT_DEFINE_ERROR(InvalidMesh, Data)
VOLFIT_DEFINE_ERROR(DegenerateFace, Data)
VOLFIT_DEFINE_ERROR(NonWatertightMesh, Data)
VOLFIT_DEFINE_ERROR(InsufficientPoints, Data)
VOLFIT_DEFINE_ERROR(EmptyIndex, Data)
VOLFIT_DEFINE_ERROR(EmptyIsoSurface, Data)
VOLFIT_DEFINE_ERROR(EmptyPointSet, Data)
VOLFIT_DEFINE_ERROR(NoPairsFound, Data)
VOLFIT_DEFINE_ERROR(OverlappingPrimitives, Data)
VOLFIT_DEFINE_ERROR(NoResults, Data)
VOLFIT_DEFINE_ERROR(NonFiniteInput, Data)
VOLFIT_DEFINE_ERROR(DegenerateConfiguration, Numeric)
VOLFIT_DEFINE_ERROR(NonFiniteGradient, Numeric)
VOLFIT_DEFINE_ERROR(NonFiniteEnergy, Numeric)
VOLFIT_DEFINE_ERROR(DivergenceDetected, Numeric)

#undef VOLFIT_DEFINE_ERROR

}  // namespace volfit
