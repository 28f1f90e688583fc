#pragma once

#include <stdexcept>
#include <string>

namespace ddekit {

/// Invalid configuration, spec, or argument combination. CLI exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape mismatch between an operand and what a spec/params pair implies.
class dimension_error : public config_error {
public:
    explicit dimension_error(const std::string& msg) : config_error(msg) {}
};

/// Non-finite state encountered while integrating. Carries the failing time.
/// CLI exit code 3.
class divergence_error : public std::runtime_error {
public:
    divergence_error(const std::string& msg, double t)
        : std::runtime_error(msg + " at t=" + std::to_string(t)), time_(t) {}
    double time() const { return time_; }

private:
    double time_;
};

/// Non-finite value outside the integration loop (oracles, estimators).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// File-system or serialization failure. CLI exit code 4.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ddekit
