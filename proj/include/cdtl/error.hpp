#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cdtl {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents / layer geometry do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A value is outside its domain (negative distance, empty batch, NaN input, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// A configuration cannot be realized (pooling exhausts the image, bad margins, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A serialized checkpoint or reference bank is malformed.
class FormatError : public Error {
public:
    using Error::Error;
};

// Dataset directory, manifest, or image file problems.
class DatasetError : public Error {
public:
    using Error::Error;
};

// The sampler ran out of distinct triplet constellations.
class CapacityError : public Error {
public:
    CapacityError(const std::string& msg, std::uint64_t remaining)
        : Error(msg), remaining_constellations(remaining) {}

    std::uint64_t remaining_constellations;
};

// A reference bank was built from a different model than the one querying it.
class StaleBankError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss or non-finite weights.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Wraps any Error thrown inside an experiment pipeline with the stage name.
class PipelineError : public Error {
public:
    PipelineError(const std::string& stage, const std::string& msg)
        : Error("stage '" + stage + "': " + msg), stage(stage) {}

    std::string stage;
};

}  // namespace cdtl
