#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace audio_audit {

enum class ErrorKind {
    Format,          // malformed file header or payload layout
    Consistency,     // two inputs disagree (ids, subjects)
    Data,            // values invalid (NaN, out of range)
    Parameter,       // caller-supplied argument out of range
    Degenerate,      // input collapses to an undefined quantity
    UndefinedMetric, // metric not defined for this input
    Ingestion,       // audio could not be decoded
    NotFound,
    Validation,
    Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

class AuditError : public std::runtime_error {
public:
    AuditError(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw AuditError(kind, message);
}

}  // namespace audio_audit
