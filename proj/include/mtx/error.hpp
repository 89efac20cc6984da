// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mtx {

// Error categories map one-to-one to CLI exit diagnostics: every failure
// surfaces as "error[<code>] message" on stderr with a nonzero exit.
enum class ErrorCode {
    shape,
    numeric,
    config,
    data,
    io,
    train,
    analyze,
    usage,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::shape: return "shape";
        case ErrorCode::numeric: return "numeric";
        case ErrorCode::config: return "config";
        case ErrorCode::data: return "data";
        case ErrorCode::io: return "io";
        case ErrorCode::train: return "train";
        case ErrorCode::analyze: return "analyze";
        case ErrorCode::usage: return "usage";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

inline void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

} // namespace mtx
