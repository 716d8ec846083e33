#pragma once

#include <stdexcept>
#include <string>

namespace iplt {

// Float width is fixed at build time; the reference build is float64 so
// gradient checks can run at full precision.
using scalar = double;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// A selection or surgery step would remove every filter of one layer.
class LayerCollapseError : public Error {
public:
    LayerCollapseError(int layer_index, const std::string& msg)
        : Error(msg), layer_index(layer_index) {}
    int layer_index;
};

class CheckpointError : public Error {
public:
    enum class Kind { BadMagic, BadVersion, Truncated, BadChecksum, Io };
    CheckpointError(Kind kind, const std::string& msg) : Error(msg), kind(kind) {}
    Kind kind;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    enum class Kind { BadMagic, DimensionMismatch, Truncated, LabelRange, Invalid };
    DataError(Kind kind, const std::string& msg) : Error(msg), kind(kind) {}
    Kind kind;
};

// Checked mode enables NaN/Inf detection in hot paths (off by default).
bool checked_mode();
void set_checked_mode(bool on);

}  // namespace iplt
