#include "cscl/mat.hpp"

#include <algorithm>
#include <cmath>

namespace cscl {

Mat matmul(const Mat& a, const Mat& b) {
    require_shape(a.cols == b.rows, "matmul");
    Mat c(a.rows, b.cols);
    // ikj order keeps the inner loop contiguous in b and c.
    for (size_t i = 0; i < a.rows; ++i) {
        double* crow = c.data.data() + i * c.cols;
        for (size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Mat transpose(const Mat& a) {
    Mat t(a.cols, a.rows);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Mat add(const Mat& a, const Mat& b) {
    require_shape(a.same_shape(b), "add");
    Mat c = a;
    for (size_t i = 0; i < c.size(); ++i) c.data[i] += b.data[i];
    return c;
}

Mat scale(const Mat& a, double c) {
    Mat out = a;
    for (double& v : out.data) v *= c;
    return out;
}

Mat hadamard(const Mat& a, const Mat& b) {
    require_shape(a.same_shape(b), "hadamard");
    Mat c = a;
    for (size_t i = 0; i < c.size(); ++i) c.data[i] *= b.data[i];
    return c;
}

Mat softmax_rows(const Mat& x) {
    Mat y(x.rows, x.cols);
    for (size_t i = 0; i < x.rows; ++i) {
        const auto xi = x.row(i);
        double m = xi[0];
        for (double v : xi) m = std::max(m, v);
        double sum = 0.0;
        for (size_t j = 0; j < x.cols; ++j) {
            const double e = std::exp(xi[j] - m);
            y.at(i, j) = e;
            sum += e;
        }
        for (size_t j = 0; j < x.cols; ++j) y.at(i, j) /= sum;
    }
    return y;
}

Mat layernorm_rows(const Mat& x, const Mat& gain, const Mat& bias, double eps) {
    require_shape(gain.rows == 1 && gain.cols == x.cols, "layernorm_rows gain");
    require_shape(bias.rows == 1 && bias.cols == x.cols, "layernorm_rows bias");
    Mat y(x.rows, x.cols);
    const double n = static_cast<double>(x.cols);
    for (size_t i = 0; i < x.rows; ++i) {
        const auto xi = x.row(i);
        double mean = 0.0;
        for (double v : xi) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : xi) var += (v - mean) * (v - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (size_t j = 0; j < x.cols; ++j)
            y.at(i, j) = (xi[j] - mean) * inv * gain.at(0, j) + bias.at(0, j);
    }
    return y;
}

double logsumexp(std::span<const double> values) {
    require(!values.empty(), "logsumexp: empty input");
    double m = values[0];
    for (double v : values) m = std::max(m, v);
    if (!std::isfinite(m)) return m;  // all -inf stays -inf; +inf stays +inf
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - m);
    return m + std::log(sum);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "cosine_similarity: length mismatch");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

Mat glorot_init(size_t rows, size_t cols, Rng& rng) {
    Mat m(rows, cols);
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& v : m.data) v = rng.uniform(-limit, limit);
    m.quantize_f32();
    return m;
}

}  // namespace cscl
