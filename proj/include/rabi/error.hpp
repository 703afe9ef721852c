#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rabi {

/// Eigen-iteration failed to converge; carries the offending eigen index.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::size_t index)
        : std::runtime_error(what + " (eigen index " + std::to_string(index) + ")"), index_(index) {}

    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

/// Position grid cannot represent the requested wavefunction.
class GridError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user configuration (flags, config file, conflicting sources).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failure, message carries the path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rabi
