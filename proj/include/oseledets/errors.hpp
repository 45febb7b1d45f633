#pragma once

#include <stdexcept>
#include <string>

namespace oseledets {

// Failure conditions surfaced by the library. The CLI maps a few of these to
// dedicated exit codes; everything else is an ordinary failure.
enum class ErrorCode {
    NonFiniteInput,
    DimensionMismatch,
    NotTransverse,
    DegenerateIntersection,
    UnknownSystem,
    BadParams,
    NonFiniteMatrix,
    ClusterAmbiguity,
    DimensionCollapse,
    SignDefect,
    SingularRestriction,
    GapTooSmall,
    NoSuchN,
    NotHyperbolic,
    TooFewPairs,
    PairTooFar,
    HypothesisFail,
    BadRates,
    Unreachable,
};

inline const char* code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NotTransverse: return "NotTransverse";
        case ErrorCode::DegenerateIntersection: return "DegenerateIntersection";
        case ErrorCode::UnknownSystem: return "UnknownSystem";
        case ErrorCode::BadParams: return "BadParams";
        case ErrorCode::NonFiniteMatrix: return "NonFiniteMatrix";
        case ErrorCode::ClusterAmbiguity: return "ClusterAmbiguity";
        case ErrorCode::DimensionCollapse: return "DimensionCollapse";
        case ErrorCode::SignDefect: return "SignDefect";
        case ErrorCode::SingularRestriction: return "SingularRestriction";
        case ErrorCode::GapTooSmall: return "GapTooSmall";
        case ErrorCode::NoSuchN: return "NoSuchN";
        case ErrorCode::NotHyperbolic: return "NotHyperbolic";
        case ErrorCode::TooFewPairs: return "TooFewPairs";
        case ErrorCode::PairTooFar: return "PairTooFar";
        case ErrorCode::HypothesisFail: return "HypothesisFail";
        case ErrorCode::BadRates: return "BadRates";
        case ErrorCode::Unreachable: return "Unreachable";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(code_name(code)) + ": " + msg), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

// Configuration/CLI parse failures; distinct from numeric errors so the CLI
// can exit with its own status.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace oseledets
