#pragma once

#include <stdexcept>
#include <string>

namespace cocoafuse {

/// Broad failure categories. The CLI maps each one to a process exit code.
enum class ErrorKind {
    usage,        // caller violated a precondition
    config,       // malformed configuration document
    data,         // unreadable or non-finite input data
    convergence,  // sampler diagnostics out of bounds
    numerical,    // non-finite intermediate results
    metric,       // a metric is undefined on the given input
    sampling,     // sampler could not produce any usable transition
    tuning,       // empirical-Bayes loop produced no valid iterate
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return {ErrorKind::usage, what}; }
inline Error config_error(const std::string& what) { return {ErrorKind::config, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::data, what}; }
inline Error metric_error(const std::string& what) { return {ErrorKind::metric, what}; }

}  // namespace cocoafuse
