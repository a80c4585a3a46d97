#include "xmd/error.hpp"

namespace xmd {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyManifest: return "EmptyManifest";
        case ErrorCode::InsufficientApks: return "InsufficientApks";
        case ErrorCode::ManifestInconsistent: return "ManifestInconsistent";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::UnknownChannelName: return "UnknownChannelName";
        case ErrorCode::NonPositiveWindow: return "NonPositiveWindow";
        case ErrorCode::SeriesTooShort: return "SeriesTooShort";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::EmptyDecisionList: return "EmptyDecisionList";
        case ErrorCode::SplitContamination: return "SplitContamination";
        case ErrorCode::SplitTagMismatch: return "SplitTagMismatch";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::EmptyFeatureSet: return "EmptyFeatureSet";
        case ErrorCode::DegenerateDimension: return "DegenerateDimension";
        case ErrorCode::IterationLimit: return "IterationLimit";
        case ErrorCode::MissingArtifact: return "MissingArtifact";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "UnknownError";
}

}  // namespace xmd
