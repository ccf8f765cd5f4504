#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "regroup/error.hpp"

namespace regroup::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if(T value, std::endian order) {
    if (order == std::endian::native) {
        return value;
    }
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
        std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    }
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

class ByteWriter {
public:
    void magic(std::string_view tag) {
        bytes_.insert(bytes_.end(), tag.begin(), tag.end());
    }

    template <typename T>
    void put(T value, std::endian order = std::endian::little) {
        static_assert(std::is_trivially_copyable_v<T>);
        value = byteswap_if(value, order);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    void u8(std::uint8_t v) { put(v); }
    void u32(std::uint32_t v) { put(v); }
    void f32(float v) { put(v); }
    void f64(double v) { put(v); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    void expect_magic(std::string_view tag) {
        need(tag.size());
        if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
            throw ValidationError(what_ + ": bad magic (expected " + std::string(tag) + ")");
        }
        pos_ += tag.size();
    }

    template <typename T>
    T get(std::endian order = std::endian::little) {
        static_assert(std::is_trivially_copyable_v<T>);
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return byteswap_if(value, order);
    }

    std::uint8_t u8() { return get<std::uint8_t>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    float f32() { return get<float>(); }
    double f64() { return get<double>(); }

    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    void expect_end() const {
        if (remaining() != 0) {
            throw ValidationError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
        }
    }

    [[noreturn]] void fail(const std::string& message) const { throw ValidationError(what_ + ": " + message); }

private:
    void need(std::size_t n) const {
        if (remaining() < n) {
            throw ValidationError(what_ + ": truncated (needed " + std::to_string(n) + " more bytes at offset " +
                                  std::to_string(pos_) + ")");
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

} // namespace regroup::detail
