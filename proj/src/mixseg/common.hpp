#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mixseg {

// Error taxonomy. The CLI maps these 1:1 onto exit codes:
// ConfigError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

// Dimension/shape contract violations. Grouped with data errors for exit-code
// purposes: they surface when data and model configuration disagree.
struct ShapeError : DataError {
    using DataError::DataError;
};

struct NumericError : Error {
    using Error::Error;
};

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) {
            throw ShapeError("shape has non-positive dimension " + std::to_string(d));
        }
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    s += ")";
    return s;
}

// splitmix64-style mixing for deriving independent seeds from (seed, epoch,
// index) style tuples.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL +
                      c * 0x94d049bb133111ebULL + 0x2545f4914f6cdd1dULL;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// Deterministic RNG used everywhere randomness is needed. Wraps mt19937_64 so
// the stream is identical across platforms; normal() is Box-Muller without a
// cached spare, keeping the state fully captured by the engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n ? engine_() % n : 0; }

    bool coin() { return (engine_() & 1u) != 0; }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // For derived per-item streams (parallel-safe augmentation etc.).
    Rng derive(std::uint64_t stream) const {
        std::mt19937_64 probe = engine_;
        return Rng(probe() ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (!is) {
            throw DataError("invalid RNG state string");
        }
    }

private:
    std::mt19937_64 engine_;
};

// Worker cap from MIXSEG_THREADS; defaults to single-threaded execution.
inline int max_worker_threads() {
    const char* env = std::getenv("MIXSEG_THREADS");
    if (!env) return 1;
    const int v = std::atoi(env);
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, std::min(v, hw > 0 ? hw : 1));
}

// Index-parallel map. fn(i) must touch only slot i state, so the result is
// identical for any thread count.
template <class F>
void parallel_for(std::int64_t n, F&& fn) {
    const int threads = static_cast<int>(std::min<std::int64_t>(max_worker_threads(), n));
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (std::int64_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
}

}  // namespace mixseg
