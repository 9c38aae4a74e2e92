#pragma once

#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace flowsynth {

using Shape = std::vector<std::size_t>;
using Mask = std::vector<std::uint8_t>;

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};
struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& m) : std::runtime_error(m) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error(m) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline Mask full_mask(std::size_t n) { return Mask(n, 1); }

inline std::size_t mask_count(const Mask& m) {
    std::size_t c = 0;
    for (auto v : m)
        if (v) ++c;
    return c;
}

namespace detail {
inline int& thread_cap_storage() {
    static int cap = [] {
        unsigned hw = std::thread::hardware_concurrency();
        int n = hw == 0 ? 1 : static_cast<int>(hw);
        if (const char* env = std::getenv("FLOWSYNTH_THREADS")) {
            char* end = nullptr;
            long v = std::strtol(env, &end, 10);
            if (end != env && v >= 1 && v < 1024) n = static_cast<int>(v) < n ? static_cast<int>(v) : n;
        }
        return n;
    }();
    return cap;
}
}  // namespace detail

inline int max_threads() { return detail::thread_cap_storage(); }
inline void set_max_threads(int n) { detail::thread_cap_storage() = n < 1 ? 1 : n; }

// Splits [begin, end) into one contiguous chunk per worker. Each index is
// processed by exactly one worker with a fixed per-index order, so results are
// bitwise identical for any thread count.
template <typename F>
void parallel_for(std::size_t begin, std::size_t end, std::size_t grain, F&& body) {
    const std::size_t n = end > begin ? end - begin : 0;
    if (n == 0) return;
    int workers = max_threads();
    if (grain > 0) {
        std::size_t by_grain = (n + grain - 1) / grain;
        if (by_grain < static_cast<std::size_t>(workers)) workers = static_cast<int>(by_grain);
    }
    if (workers <= 1) {
        body(begin, end);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers) - 1);
    const std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
    for (int w = 1; w < workers; ++w) {
        std::size_t lo = begin + chunk * static_cast<std::size_t>(w);
        std::size_t hi = lo + chunk < end ? lo + chunk : end;
        if (lo >= hi) break;
        threads.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    body(begin, begin + chunk < end ? begin + chunk : end);
    for (auto& t : threads) t.join();
}

}  // namespace flowsynth
