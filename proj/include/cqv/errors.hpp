#pragma once

#include <stdexcept>
#include <string>

namespace cqv {

// One exception type per named failure mode. The CLI maps these to exit code 3
// with the class name in the diagnostic, so names are load-bearing.
#define CQV_DEFINE_ERROR(Name)                                        \
    class Name : public std::runtime_error {                          \
    public:                                                           \
        explicit Name(const std::string& what_arg)                    \
            : std::runtime_error(std::string(#Name) + ": " + what_arg) {} \
        static const char* kind() { return #Name; }                   \
    }

CQV_DEFINE_ERROR(SingularMetric);
CQV_DEFINE_ERROR(DomainError);
CQV_DEFINE_ERROR(NormalizationError);
CQV_DEFINE_ERROR(PivotFailure);
CQV_DEFINE_ERROR(DriftBlowup);
CQV_DEFINE_ERROR(NodeRegion);
CQV_DEFINE_ERROR(Unsupported);
CQV_DEFINE_ERROR(ModeError);
CQV_DEFINE_ERROR(GridError);
CQV_DEFINE_ERROR(IllPosedError);
CQV_DEFINE_ERROR(EigenError);
CQV_DEFINE_ERROR(TopologyError);
CQV_DEFINE_ERROR(ConfigMismatch);
CQV_DEFINE_ERROR(StepSizeError);

#undef CQV_DEFINE_ERROR

}  // namespace cqv
