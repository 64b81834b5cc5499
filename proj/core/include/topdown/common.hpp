#pragma once

#include <cstdint>
#include <new>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace topdown {

using Shape = std::vector<int64_t>;

// 64-byte-aligned storage for numeric buffers. Vectorized kernels split
// loops at alignment boundaries; pinning the buffer phase keeps reduction
// order — and therefore results — independent of the surrounding heap layout.
template <typename T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAlloc() = default;
    template <typename U>
    AlignedAlloc(const AlignedAlloc<U>&) noexcept {}

    T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAlloc<U>&) const noexcept {
        return true;
    }
};

template <typename T>
using AVec = std::vector<T, AlignedAlloc<T>>;

inline int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// All contract violations surface as invalid_argument with a diagnostic
// message; runtime failures (I/O, divergence) as runtime_error.
[[noreturn]] inline void fail_shape(const std::string& op, const std::string& detail) {
    throw std::invalid_argument(op + ": " + detail);
}

}  // namespace topdown
