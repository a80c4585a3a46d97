#pragma once

#include <stdexcept>
#include <string>

namespace xmd {

enum class ErrorCode {
    // telemetry / split
    EmptyManifest,
    InsufficientApks,
    ManifestInconsistent,
    // synthgen
    InvalidSpec,
    IoFailure,
    // ingest
    ParseError,
    SchemaViolation,
    UnknownChannelName,
    NonPositiveWindow,
    // features
    SeriesTooShort,
    LengthMismatch,
    // learn
    SingleClassTrainingSet,
    DimensionMismatch,
    NonConvergence,
    // fusion
    EmptyDecisionList,
    SplitContamination,
    SplitTagMismatch,
    // stats
    TooFewSamples,
    EmptyFeatureSet,
    // manifold
    DegenerateDimension,
    IterationLimit,
    // cli / plumbing
    MissingArtifact,
    InvalidConfig,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace xmd
