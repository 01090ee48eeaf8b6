#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace axwin {

// Error taxonomy. CLI maps these to exit codes: ConfigError -> 2,
// IoError -> 3, NumericError and failed checks -> 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsupportedOpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

inline const char* dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }
inline std::size_t dtype_size(Dtype d) { return d == Dtype::F32 ? 4 : 8; }

// Every tensor in this codebase is rank-4 with extents (n, h, w, c),
// stored row-major in that order. Matrices and vectors are embedded by
// setting the leading extents to 1.
struct Shape {
    std::int64_t n = 1;
    std::int64_t h = 1;
    std::int64_t w = 1;
    std::int64_t c = 1;

    std::int64_t numel() const { return n * h * w * c; }
    std::int64_t index(std::int64_t in, std::int64_t ih, std::int64_t iw, std::int64_t ic) const {
        return ((in * h + ih) * w + iw) * c + ic;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
               std::to_string(c) + ")";
    }
};

}  // namespace axwin
