#include "radgs/error.hpp"

namespace radgs {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid parameter";
    case ErrorKind::NumericalDegeneracy: return "numerical degeneracy";
    case ErrorKind::TooManyPoints: return "too many points";
    case ErrorKind::Inconsistency: return "inconsistency";
    case ErrorKind::TrainingDivergence: return "training divergence";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::SizeMismatch: return "size mismatch";
    case ErrorKind::Config: return "configuration error";
    }
    return "unknown error";
}

} // namespace radgs
