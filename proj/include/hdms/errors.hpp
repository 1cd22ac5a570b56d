#pragma once

#include <stdexcept>
#include <string>

namespace hdms {

// Base for all domain errors raised by the pipeline. CLI maps these to exit 1.
struct PipelineError : std::runtime_error {
    explicit PipelineError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : PipelineError {
    explicit DimensionMismatch(const std::string& msg) : PipelineError(msg) {}
};

struct PlexusOutsideMuscularis : PipelineError {
    explicit PlexusOutsideMuscularis(const std::string& msg) : PipelineError(msg) {}
};

struct NonPositiveResolution : PipelineError {
    explicit NonPositiveResolution(const std::string& msg) : PipelineError(msg) {}
};

struct TooFewSlides : PipelineError {
    explicit TooFewSlides(const std::string& msg) : PipelineError(msg) {}
};

struct InvalidConfig : PipelineError {
    explicit InvalidConfig(const std::string& msg) : PipelineError(msg) {}
};

struct NoTissue : PipelineError {
    explicit NoTissue(const std::string& msg) : PipelineError(msg) {}
};

struct DegenerateStains : PipelineError {
    explicit DegenerateStains(const std::string& msg) : PipelineError(msg) {}
};

struct InvalidStride : PipelineError {
    explicit InvalidStride(const std::string& msg) : PipelineError(msg) {}
};

struct CountMismatch : PipelineError {
    explicit CountMismatch(const std::string& msg) : PipelineError(msg) {}
};

struct IndivisibleTile : PipelineError {
    explicit IndivisibleTile(const std::string& msg) : PipelineError(msg) {}
};

struct ShapeMismatch : PipelineError {
    explicit ShapeMismatch(const std::string& msg) : PipelineError(msg) {}
};

struct EmptyTrainingSet : PipelineError {
    explicit EmptyTrainingSet(const std::string& msg) : PipelineError(msg) {}
};

struct NoPlexusRegions : PipelineError {
    explicit NoPlexusRegions(const std::string& msg) : PipelineError(msg) {}
};

struct PlacementFailure : PipelineError {
    explicit PlacementFailure(const std::string& msg) : PipelineError(msg) {}
};

// I/O layer errors.
struct UnsupportedFormat : PipelineError {
    explicit UnsupportedFormat(const std::string& msg) : PipelineError(msg) {}
};

struct TruncatedFile : PipelineError {
    explicit TruncatedFile(const std::string& msg) : PipelineError(msg) {}
};

struct DimensionOverflow : PipelineError {
    explicit DimensionOverflow(const std::string& msg) : PipelineError(msg) {}
};

struct BadMagic : PipelineError {
    explicit BadMagic(const std::string& msg) : PipelineError(msg) {}
};

struct VersionMismatch : PipelineError {
    explicit VersionMismatch(const std::string& msg) : PipelineError(msg) {}
};

struct CorruptDirectory : PipelineError {
    explicit CorruptDirectory(const std::string& msg) : PipelineError(msg) {}
};

} // namespace hdms
