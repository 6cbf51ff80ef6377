/*
   Copyright 2026 The nemlab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nemlab {

enum class ErrorKind {
    invalid_parameter,
    domain_too_small,
    grid_mismatch,
    degenerate_density,
    not_a_probability,
    numeric_overflow,
    solver_failure,
    no_convergence,
    invalid_drift,
    weight_overflow,
    invalid_data,
    insufficient_span,
    config_error,
    io_error,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::domain_too_small: return "domain-too-small";
    case ErrorKind::grid_mismatch: return "grid-mismatch";
    case ErrorKind::degenerate_density: return "degenerate-density";
    case ErrorKind::not_a_probability: return "not-a-probability";
    case ErrorKind::numeric_overflow: return "numeric-overflow";
    case ErrorKind::solver_failure: return "solver-failure";
    case ErrorKind::no_convergence: return "no-convergence";
    case ErrorKind::invalid_drift: return "invalid-drift";
    case ErrorKind::weight_overflow: return "weight-overflow";
    case ErrorKind::invalid_data: return "invalid-data";
    case ErrorKind::insufficient_span: return "insufficient-span";
    case ErrorKind::config_error: return "config-error";
    case ErrorKind::io_error: return "io-error";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

    /// Numerical failures map to exit status 3 in the CLI; everything
    /// else that is the caller's fault maps to 2.
    bool is_numerical() const noexcept {
        switch (kind_) {
        case ErrorKind::numeric_overflow:
        case ErrorKind::solver_failure:
        case ErrorKind::no_convergence:
        case ErrorKind::weight_overflow:
        case ErrorKind::degenerate_density:
            return true;
        default:
            return false;
        }
    }

private:
    ErrorKind kind_;
    std::string message_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) throw Error(kind, what);
}

} // namespace nemlab
