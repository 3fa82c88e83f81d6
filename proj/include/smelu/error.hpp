#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smelu {

/// Base for every error the library throws. `kind()` is a stable machine tag
/// used by the CLI when it reports failures as JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

/// Invalid activation, layer or optimizer parameter.
class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& what) : Error("parameter", what) {}
};

/// A requested operation does not exist for this activation kind.
class UnsupportedKindError : public Error {
public:
    explicit UnsupportedKindError(const std::string& what) : Error("unsupported_kind", what) {}
};

/// Pieces of a piecewise activation fail to join, or a bridge cannot be built.
class GeometryError : public Error {
public:
    GeometryError(const std::string& what, std::size_t knot)
        : Error("geometry", what + " (knot " + std::to_string(knot) + ")"), knot_(knot) {}

    std::size_t knot() const noexcept { return knot_; }

private:
    std::size_t knot_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

/// NaN or Inf appeared in a forward pass or a parameter update.
class NumericFault : public Error {
public:
    explicit NumericFault(const std::string& what) : Error("numeric_fault", what) {}
};

/// Malformed file contents (IDX, CSV, JSON checkpoints).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error("format", what) {}
};

/// Activation grammar failure; `position()` is the 0-based offset into the input.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position)
        : Error("parse", what + " at position " + std::to_string(position)), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Bad experiment or surface configuration.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

/// Backward called with a cache that does not belong to the current parameters.
class StaleCacheError : public Error {
public:
    explicit StaleCacheError(const std::string& what) : Error("stale_cache", what) {}
};

} // namespace smelu
