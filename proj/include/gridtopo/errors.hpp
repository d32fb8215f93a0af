#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gridtopo {

enum class ErrorKind {
    InvalidLine,
    Structural,
    UnknownBus,
    Numerical,
    Precondition,
    RankDeficiency,
    Ambiguity,
    Size,
    Misuse,
    BusSetMismatch,
    Parse,
    Usage,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidLine: return "invalid_line";
        case ErrorKind::Structural: return "structural";
        case ErrorKind::UnknownBus: return "unknown_bus";
        case ErrorKind::Numerical: return "numerical";
        case ErrorKind::Precondition: return "precondition";
        case ErrorKind::RankDeficiency: return "rank_deficiency";
        case ErrorKind::Ambiguity: return "ambiguity";
        case ErrorKind::Size: return "size";
        case ErrorKind::Misuse: return "misuse";
        case ErrorKind::BusSetMismatch: return "bus_set_mismatch";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Usage: return "usage";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace gridtopo
