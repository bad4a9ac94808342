// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cmix {

// Numeric values are mirrored by cmix_status in conceptmix.h.
enum class ErrorCode : int {
    Argument = 1,
    Dimension = 2,
    Format = 3,
    Validation = 4,
    Data = 5,
    Io = 6,
    Config = 7,
    Numeric = 8,
    EmptyMask = 9,
    DegenerateLatent = 10,
    Lineage = 11,
    Internal = 12,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) {
        raise(code, message);
    }
}

}  // namespace cmix
