#include "audio_audit/errors.hpp"

namespace audio_audit {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Format: return "format error";
        case ErrorKind::Consistency: return "consistency error";
        case ErrorKind::Data: return "data error";
        case ErrorKind::Parameter: return "parameter error";
        case ErrorKind::Degenerate: return "degenerate-sample error";
        case ErrorKind::UndefinedMetric: return "undefined-metric error";
        case ErrorKind::Ingestion: return "ingestion error";
        case ErrorKind::NotFound: return "not found";
        case ErrorKind::Validation: return "validation error";
        case ErrorKind::Io: return "I/O error";
    }
    return "error";
}

}  // namespace audio_audit
