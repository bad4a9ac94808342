// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/tensor_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "conceptmix/error.hpp"

namespace cmix {

void TensorFile::add(std::string name, Tensor tensor) {
    require(!name.empty() && name.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorCode::Argument,
            "tensor name must be 1..65535 bytes");
    require(find(name) == nullptr, ErrorCode::Argument, "duplicate tensor name '" + name + "'");
    require(!tensor.empty(), ErrorCode::Argument, "tensor '" + name + "' is empty");
    entries_.push_back(NamedTensor{std::move(name), std::move(tensor)});
}

const Tensor* TensorFile::find(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) {
            return &e.tensor;
        }
    }
    return nullptr;
}

const Tensor& TensorFile::get(std::string_view name) const {
    const Tensor* t = find(name);
    require(t != nullptr, ErrorCode::Validation, "missing required tensor '" + std::string(name) + "'");
    return *t;
}

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    bool has(std::size_t n) const { return in_.size() - pos_ >= n; }
    std::size_t remaining() const { return in_.size() - pos_; }

    std::uint8_t u8() { return in_[pos_++]; }
    std::uint16_t u16() {
        std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file) {
    Writer w;
    w.bytes(kTensorFileMagic, 4);
    w.u32(kTensorFileVersion);
    w.u32(static_cast<std::uint32_t>(file.entries().size()));
    for (const auto& [name, tensor] : file.entries()) {
        require(tensor.rank() <= 255, ErrorCode::Argument, "tensor '" + name + "' has too many dimensions");
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u8(static_cast<std::uint8_t>(tensor.rank()));
        for (std::size_t e : tensor.shape()) {
            require(e <= std::numeric_limits<std::uint32_t>::max(), ErrorCode::Argument, "extent exceeds u32");
            w.u32(static_cast<std::uint32_t>(e));
        }
        for (double v : tensor.data()) {
            const float f = static_cast<float>(v);
            require(std::isfinite(f), ErrorCode::Data, "tensor '" + name + "' has a value not representable as f32");
            w.f32(f);
        }
    }
    return w.take();
}

TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    require(r.has(12), ErrorCode::Format, "file too short for a tensor container header");
    require(std::memcmp(bytes.data(), kTensorFileMagic, 4) == 0, ErrorCode::Format, "bad magic, expected LCB1");
    r.str(4);
    const std::uint32_t version = r.u32();
    require(version == kTensorFileVersion, ErrorCode::Format, "unsupported container version " + std::to_string(version));
    const std::uint32_t count = r.u32();

    TensorFile file;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::string where = "tensor #" + std::to_string(t);
        require(r.has(2), ErrorCode::Format, "truncated header of " + where);
        const std::uint16_t name_len = r.u16();
        require(name_len > 0 && r.has(name_len + 1u), ErrorCode::Format, "truncated or empty name of " + where);
        std::string name = r.str(name_len);
        const std::uint8_t ndim = r.u8();
        require(ndim > 0, ErrorCode::Format, "tensor '" + name + "' has zero dimensions");
        require(r.has(4u * ndim), ErrorCode::Format, "truncated shape of tensor '" + name + "'");
        Shape shape;
        std::size_t numel = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const std::uint32_t e = r.u32();
            require(e > 0, ErrorCode::Format, "tensor '" + name + "' has a zero extent");
            shape.push_back(e);
            numel *= e;
        }
        require(numel <= r.remaining() / 4, ErrorCode::Data,
                "truncated payload of tensor '" + name + "': need " + std::to_string(numel * 4) + " bytes, have " +
                    std::to_string(r.remaining()));
        std::vector<double> data(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            const float f = r.f32();
            require(std::isfinite(f), ErrorCode::Data, "tensor '" + name + "' holds a non-finite value");
            data[i] = static_cast<double>(f);
        }
        require(file.find(name) == nullptr, ErrorCode::Format, "duplicate tensor name '" + name + "'");
        file.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    require(r.remaining() == 0, ErrorCode::Format, "trailing bytes after last tensor");
    return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open '" + path.string() + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot create '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
    write_file_bytes(path, encode_tensor_file(file));
}

TensorFile read_tensor_file(const std::filesystem::path& path) { return decode_tensor_file(read_file_bytes(path)); }

}  // namespace cmix
