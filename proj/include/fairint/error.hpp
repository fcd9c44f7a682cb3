#pragma once

#include <stdexcept>
#include <string>

namespace fairint {

/// Error categories. The CLI maps each category onto a process exit code.
enum class ErrorKind {
    dimension,
    domain,
    data,
    config,
    usage,
    metric,
    training,
    io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define FAIRINT_DEFINE_ERROR(Name, Kind)                                  \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(Kind, what) {}    \
    };

FAIRINT_DEFINE_ERROR(DimensionError, ErrorKind::dimension)
FAIRINT_DEFINE_ERROR(DomainError, ErrorKind::domain)
FAIRINT_DEFINE_ERROR(DataError, ErrorKind::data)
FAIRINT_DEFINE_ERROR(ConfigError, ErrorKind::config)
FAIRINT_DEFINE_ERROR(UsageError, ErrorKind::usage)
FAIRINT_DEFINE_ERROR(MetricError, ErrorKind::metric)
FAIRINT_DEFINE_ERROR(TrainingError, ErrorKind::training)
FAIRINT_DEFINE_ERROR(IoError, ErrorKind::io)

#undef FAIRINT_DEFINE_ERROR

/// Exit codes: 0 success, 2 config/usage, 3 data, 4 training/metric.
inline int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::config:
    case ErrorKind::usage:
        return 2;
    case ErrorKind::data:
    case ErrorKind::io:
        return 3;
    case ErrorKind::dimension:
    case ErrorKind::domain:
    case ErrorKind::metric:
    case ErrorKind::training:
        return 4;
    }
    return 4;
}

inline const char* kind_name(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::domain: return "domain";
    case ErrorKind::data: return "data";
    case ErrorKind::config: return "config";
    case ErrorKind::usage: return "usage";
    case ErrorKind::metric: return "metric";
    case ErrorKind::training: return "training";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

} // namespace fairint
