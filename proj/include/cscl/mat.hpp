#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cscl/common.hpp"
#include "cscl/rng.hpp"

namespace cscl {

/// Dense row-major matrix. Double storage so finite-difference gradient
/// checks resolve below 1e-4 relative error; parameters are quantized to
/// f32-representable values at init and after optimizer steps to match the
/// f32 checkpoint payload bit-exactly.
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }

    std::span<double> row(size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }

    size_t size() const { return data.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// Rounds every entry to the nearest float value.
    void quantize_f32() {
        for (double& v : data) v = static_cast<double>(static_cast<float>(v));
    }

    static Mat identity(size_t n) {
        Mat m(n, n);
        for (size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

inline void require_shape(bool cond, const std::string& op) {
    if (!cond) fail("shape mismatch in " + op);
}

// ---------------------------------------------------------------------------
// Kernels. Pure functions; reductions accumulate in double.
// ---------------------------------------------------------------------------

Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat add(const Mat& a, const Mat& b);
Mat scale(const Mat& a, double c);
Mat hadamard(const Mat& a, const Mat& b);

/// Row-wise softmax with max subtraction; each output row sums to 1.
Mat softmax_rows(const Mat& x);

/// Row-wise layer normalization with affine gain/bias (both 1 x cols).
/// Population variance, epsilon inside the square root.
Mat layernorm_rows(const Mat& x, const Mat& gain, const Mat& bias, double eps = 1e-5);

/// log(sum(exp(v))) with max subtraction; exact for singletons.
double logsumexp(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Cosine similarity; zero-norm inputs map to 0 by convention.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Xavier-uniform init, then f32 quantization.
Mat glorot_init(size_t rows, size_t cols, Rng& rng);

constexpr double kLayerNormEps = 1e-5;

}  // namespace cscl
