#pragma once

#include <stdexcept>
#include <string>

namespace hetreg {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct TraceError : std::runtime_error {
    explicit TraceError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown by optimizers on non-finite gradients. The training harness catches
// this and records the run as diverged instead of propagating.
struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, std::size_t array_index, std::size_t entry_index)
        : std::runtime_error(what), array_index(array_index), entry_index(entry_index) {}
    std::size_t array_index;
    std::size_t entry_index;
};

}  // namespace hetreg
