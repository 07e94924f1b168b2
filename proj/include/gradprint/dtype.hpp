// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

namespace gradprint {

// Supported element types of safetensors entries. Anything else (integer,
// FP8, bool) is carried through parsing verbatim as Unsupported and rejected
// only when its values are actually needed.
struct DType {
    enum class Tag { f64, f32, f16, bf16, unsupported };

    Tag tag = Tag::unsupported;
    std::string name; // original dtype string, always set

    static DType from_name(std::string_view dtype_name) {
        DType d;
        d.name = std::string(dtype_name);
        if (dtype_name == "F64") d.tag = Tag::f64;
        else if (dtype_name == "F32") d.tag = Tag::f32;
        else if (dtype_name == "F16") d.tag = Tag::f16;
        else if (dtype_name == "BF16") d.tag = Tag::bf16;
        else d.tag = Tag::unsupported;
        return d;
    }

    bool supported() const { return tag != Tag::unsupported; }

    std::size_t byte_width() const {
        switch (tag) {
        case Tag::f64: return 8;
        case Tag::f32: return 4;
        case Tag::f16: return 2;
        case Tag::bf16: return 2;
        case Tag::unsupported: return 0;
        }
        return 0;
    }
};

inline float bf16_bits_to_f32(std::uint16_t bits) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

inline std::uint16_t f32_to_bf16_bits(float value) {
    std::uint32_t x = std::bit_cast<std::uint32_t>(value);
    if ((x & 0x7FFFFFFFu) > 0x7F800000u) {
        // NaN: keep payload top bits, force quiet.
        return static_cast<std::uint16_t>((x >> 16) | 0x0040u);
    }
    std::uint32_t lsb = (x >> 16) & 1u;
    x += 0x7FFFu + lsb; // round to nearest even
    return static_cast<std::uint16_t>(x >> 16);
}

inline float f16_bits_to_f32(std::uint16_t bits) {
    std::uint32_t sign = (bits >> 15) & 0x1u;
    std::uint32_t exp = (bits >> 10) & 0x1Fu;
    std::uint32_t mant = bits & 0x3FFu;

    std::uint32_t out;
    if (exp == 0) {
        if (mant == 0) {
            out = sign << 31;
        } else {
            // subnormal: renormalize
            exp = 1;
            while (!(mant & 0x400u)) {
                mant <<= 1;
                exp--;
            }
            mant &= 0x3FFu;
            out = (sign << 31) | ((exp + 127 - 15) << 23) | (mant << 13);
        }
    } else if (exp == 31) {
        out = (sign << 31) | 0x7F800000u | (mant << 13);
    } else {
        out = (sign << 31) | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(out);
}

inline std::uint16_t f32_to_f16_bits(float value) {
    std::uint32_t x = std::bit_cast<std::uint32_t>(value);
    std::uint32_t sign = (x >> 16) & 0x8000u;
    std::uint32_t exp = (x >> 23) & 0xFFu;
    std::uint32_t mant = x & 0x7FFFFFu;

    if (exp == 0xFFu) {
        // inf / nan
        std::uint32_t payload = mant ? (0x200u | (mant >> 13)) : 0u;
        return static_cast<std::uint16_t>(sign | 0x7C00u | payload);
    }
    int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1F) return static_cast<std::uint16_t>(sign | 0x7C00u); // overflow
    if (e <= 0) {
        if (e < -10) return static_cast<std::uint16_t>(sign); // underflow to zero
        mant |= 0x800000u;
        std::uint32_t shift = static_cast<std::uint32_t>(14 - e);
        std::uint32_t half = mant >> shift;
        std::uint32_t rem = mant & ((1u << shift) - 1u);
        std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u))) half++;
        return static_cast<std::uint16_t>(sign | half);
    }
    std::uint16_t h = static_cast<std::uint16_t>(
        sign | (static_cast<std::uint32_t>(e) << 10) | (mant >> 13));
    std::uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) h++; // carry into exp gives inf, which is correct
    return h;
}

} // namespace gradprint
