// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conceptmix/tensor.hpp"

namespace cmix {

// Little-endian container:
//   "LCB1" | u32 version=1 | u32 count |
//   count x ( u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 payload )
// Values are narrowed to f32 on write and widened to f64 on read.
inline constexpr char kTensorFileMagic[4] = {'L', 'C', 'B', '1'};
inline constexpr std::uint32_t kTensorFileVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

class TensorFile {
public:
    void add(std::string name, Tensor tensor);
    const Tensor* find(std::string_view name) const;
    // Throws a validation error naming the missing tensor.
    const Tensor& get(std::string_view name) const;

    const std::vector<NamedTensor>& entries() const noexcept { return entries_; }

private:
    std::vector<NamedTensor> entries_;
};

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file);
TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace cmix
