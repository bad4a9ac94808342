// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/error.hpp"

namespace cmix {

const char* error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::Argument: return "argument error";
    case ErrorCode::Dimension: return "dimension error";
    case ErrorCode::Format: return "format error";
    case ErrorCode::Validation: return "validation error";
    case ErrorCode::Data: return "data error";
    case ErrorCode::Io: return "io error";
    case ErrorCode::Config: return "configuration error";
    case ErrorCode::Numeric: return "numeric error";
    case ErrorCode::EmptyMask: return "empty-mask error";
    case ErrorCode::DegenerateLatent: return "degenerate-latent error";
    case ErrorCode::Lineage: return "lineage error";
    case ErrorCode::Internal: return "internal error";
    }
    return "unknown error";
}

void raise(ErrorCode code, const std::string& message) {
    throw Error(code, std::string(error_code_name(code)) + ": " + message);
}

}  // namespace cmix
