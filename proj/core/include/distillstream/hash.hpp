#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>

namespace distillstream {

// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
class Fnv1a {
public:
    void update(std::string_view bytes) {
        for (unsigned char c : bytes) {
            state_ ^= c;
            state_ *= 0x100000001b3ull;
        }
    }

    void update(std::span<const double> values) {
        for (double v : values) {
            char raw[sizeof(double)];
            std::memcpy(raw, &v, sizeof(double));
            update(std::string_view(raw, sizeof(double)));
        }
    }

    void update_u64(std::uint64_t v) {
        char raw[sizeof(v)];
        std::memcpy(raw, &v, sizeof(v));
        update(std::string_view(raw, sizeof(v)));
    }

    std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
    Fnv1a h;
    h.update(bytes);
    return h.digest();
}

}  // namespace distillstream
