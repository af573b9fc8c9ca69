#include "cscl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace cscl {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

NodeId Tape::push(Mat value, bool requires_grad,
                        std::function<void(Tape&, const Mat&)> bw) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::accumulate(NodeId id, const Mat& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat(n.value.rows, n.value.cols);
    for (size_t i = 0; i < g.size(); ++i) n.grad.data[i] += g.data[i];
}

NodeId Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

NodeId Tape::param(const Mat& value) { return push(value, true, nullptr); }

NodeId Tape::matmul(NodeId a, NodeId b) {
    Mat out = cscl::matmul(value(a), value(b));
    const bool rg = needs_grad(a) || needs_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Mat& g) {
        if (t.needs_grad(a)) t.accumulate(a, cscl::matmul(g, cscl::transpose(t.value(b))));
        if (t.needs_grad(b)) t.accumulate(b, cscl::matmul(cscl::transpose(t.value(a)), g));
    });
}

NodeId Tape::transpose(NodeId a) {
    Mat out = cscl::transpose(value(a));
    return push(std::move(out), needs_grad(a), [a](Tape& t, const Mat& g) {
        t.accumulate(a, cscl::transpose(g));
    });
}

NodeId Tape::add(NodeId a, NodeId b) {
    Mat out = cscl::add(value(a), value(b));
    const bool rg = needs_grad(a) || needs_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Mat& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

NodeId Tape::add_rowvec(NodeId a, NodeId b) {
    const Mat& av = value(a);
    const Mat& bv = value(b);
    require_shape(bv.rows == 1 && bv.cols == av.cols, "add_rowvec");
    Mat out = av;
    for (size_t i = 0; i < out.rows; ++i)
        for (size_t j = 0; j < out.cols; ++j) out.at(i, j) += bv.at(0, j);
    const bool rg = needs_grad(a) || needs_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Mat& g) {
        t.accumulate(a, g);
        if (t.needs_grad(b)) {
            Mat gb(1, g.cols);
            for (size_t i = 0; i < g.rows; ++i)
                for (size_t j = 0; j < g.cols; ++j) gb.at(0, j) += g.at(i, j);
            t.accumulate(b, gb);
        }
    });
}

NodeId Tape::scale(NodeId a, double c) {
    Mat out = cscl::scale(value(a), c);
    return push(std::move(out), needs_grad(a), [a, c](Tape& t, const Mat& g) {
        t.accumulate(a, cscl::scale(g, c));
    });
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
    Mat out = cscl::hadamard(value(a), value(b));
    const bool rg = needs_grad(a) || needs_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Mat& g) {
        if (t.needs_grad(a)) t.accumulate(a, cscl::hadamard(g, t.value(b)));
        if (t.needs_grad(b)) t.accumulate(b, cscl::hadamard(g, t.value(a)));
    });
}

NodeId Tape::softmax_rows(NodeId a) {
    Mat out = cscl::softmax_rows(value(a));
    const NodeId self_hint = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), needs_grad(a), [a, self_hint](Tape& t, const Mat& g) {
        const Mat& y = t.value(self_hint);
        Mat gx(y.rows, y.cols);
        for (size_t i = 0; i < y.rows; ++i) {
            double dotgy = 0.0;
            for (size_t j = 0; j < y.cols; ++j) dotgy += g.at(i, j) * y.at(i, j);
            for (size_t j = 0; j < y.cols; ++j)
                gx.at(i, j) = y.at(i, j) * (g.at(i, j) - dotgy);
        }
        t.accumulate(a, gx);
    });
}

NodeId Tape::layernorm_rows(NodeId x, NodeId gain, NodeId bias) {
    const Mat& xv = value(x);
    const Mat& gv = value(gain);
    Mat out = cscl::layernorm_rows(xv, gv, value(bias), kLayerNormEps);
    // Cache per-row mean and inverse stddev for the backward pass.
    const size_t n = xv.cols;
    Mat stats(xv.rows, 2);
    for (size_t i = 0; i < xv.rows; ++i) {
        double mean = 0.0;
        for (double v : xv.row(i)) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : xv.row(i)) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n);
        stats.at(i, 0) = mean;
        stats.at(i, 1) = 1.0 / std::sqrt(var + kLayerNormEps);
    }
    const bool rg = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
    return push(std::move(out), rg,
                [x, gain, bias, stats](Tape& t, const Mat& g) {
        const Mat& xv = t.value(x);
        const Mat& gv = t.value(gain);
        const size_t n = xv.cols;
        const double dn = static_cast<double>(n);
        Mat gx(xv.rows, n);
        Mat ggain(1, n);
        Mat gbias(1, n);
        for (size_t i = 0; i < xv.rows; ++i) {
            const double mean = stats.at(i, 0);
            const double inv = stats.at(i, 1);
            // xhat and dL/dxhat for this row
            double mean_dxhat = 0.0;
            double mean_dxhat_xhat = 0.0;
            std::vector<double> xhat(n), dxhat(n);
            for (size_t j = 0; j < n; ++j) {
                xhat[j] = (xv.at(i, j) - mean) * inv;
                dxhat[j] = g.at(i, j) * gv.at(0, j);
                mean_dxhat += dxhat[j];
                mean_dxhat_xhat += dxhat[j] * xhat[j];
                ggain.at(0, j) += g.at(i, j) * xhat[j];
                gbias.at(0, j) += g.at(i, j);
            }
            mean_dxhat /= dn;
            mean_dxhat_xhat /= dn;
            for (size_t j = 0; j < n; ++j)
                gx.at(i, j) = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
        t.accumulate(x, gx);
        t.accumulate(gain, ggain);
        t.accumulate(bias, gbias);
    });
}

NodeId Tape::gelu(NodeId a) {
    const Mat& xv = value(a);
    Mat out(xv.rows, xv.cols);
    for (size_t i = 0; i < xv.size(); ++i) {
        const double x = xv.data[i];
        out.data[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return push(std::move(out), needs_grad(a), [a](Tape& t, const Mat& g) {
        const Mat& xv = t.value(a);
        Mat gx(xv.rows, xv.cols);
        for (size_t i = 0; i < xv.size(); ++i) {
            const double x = xv.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            gx.data[i] = g.data[i] * (cdf + x * pdf);
        }
        t.accumulate(a, gx);
    });
}

NodeId Tape::slice_cols(NodeId a, size_t c0, size_t c1) {
    const Mat& av = value(a);
    require_shape(c0 < c1 && c1 <= av.cols, "slice_cols");
    Mat out(av.rows, c1 - c0);
    for (size_t i = 0; i < av.rows; ++i)
        for (size_t j = c0; j < c1; ++j) out.at(i, j - c0) = av.at(i, j);
    return push(std::move(out), needs_grad(a), [a, c0](Tape& t, const Mat& g) {
        const Mat& av = t.value(a);
        Mat ga(av.rows, av.cols);
        for (size_t i = 0; i < g.rows; ++i)
            for (size_t j = 0; j < g.cols; ++j) ga.at(i, c0 + j) = g.at(i, j);
        t.accumulate(a, ga);
    });
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    const size_t rows = value(parts[0]).rows;
    size_t cols = 0;
    for (NodeId p : parts) {
        require_shape(value(p).rows == rows, "concat_cols");
        cols += value(p).cols;
    }
    Mat out(rows, cols);
    size_t off = 0;
    for (NodeId p : parts) {
        const Mat& pv = value(p);
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < pv.cols; ++j) out.at(i, off + j) = pv.at(i, j);
        off += pv.cols;
    }
    bool rg = false;
    for (NodeId p : parts) rg = rg || needs_grad(p);
    return push(std::move(out), rg, [parts](Tape& t, const Mat& g) {
        size_t off = 0;
        for (NodeId p : parts) {
            const Mat& pv = t.value(p);
            if (t.needs_grad(p)) {
                Mat gp(pv.rows, pv.cols);
                for (size_t i = 0; i < pv.rows; ++i)
                    for (size_t j = 0; j < pv.cols; ++j) gp.at(i, j) = g.at(i, off + j);
                t.accumulate(p, gp);
            }
            off += pv.cols;
        }
    });
}

NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    const size_t cols = value(parts[0]).cols;
    size_t rows = 0;
    for (NodeId p : parts) {
        require_shape(value(p).cols == cols, "concat_rows");
        rows += value(p).rows;
    }
    Mat out(rows, cols);
    size_t off = 0;
    for (NodeId p : parts) {
        const Mat& pv = value(p);
        for (size_t i = 0; i < pv.rows; ++i)
            for (size_t j = 0; j < cols; ++j) out.at(off + i, j) = pv.at(i, j);
        off += pv.rows;
    }
    bool rg = false;
    for (NodeId p : parts) rg = rg || needs_grad(p);
    return push(std::move(out), rg, [parts](Tape& t, const Mat& g) {
        size_t off = 0;
        for (NodeId p : parts) {
            const Mat& pv = t.value(p);
            if (t.needs_grad(p)) {
                Mat gp(pv.rows, pv.cols);
                for (size_t i = 0; i < pv.rows; ++i)
                    for (size_t j = 0; j < pv.cols; ++j) gp.at(i, j) = g.at(off + i, j);
                t.accumulate(p, gp);
            }
            off += pv.rows;
        }
    });
}

NodeId Tape::gather_rows(NodeId e, std::vector<size_t> ids) {
    const Mat& ev = value(e);
    Mat out(ids.size(), ev.cols);
    for (size_t t = 0; t < ids.size(); ++t) {
        require(ids[t] < ev.rows, "gather_rows: id out of range");
        for (size_t j = 0; j < ev.cols; ++j) out.at(t, j) = ev.at(ids[t], j);
    }
    return push(std::move(out), needs_grad(e),
                [e, ids = std::move(ids)](Tape& t, const Mat& g) {
        const Mat& ev = t.value(e);
        Mat ge(ev.rows, ev.cols);
        for (size_t r = 0; r < ids.size(); ++r)
            for (size_t j = 0; j < ev.cols; ++j) ge.at(ids[r], j) += g.at(r, j);
        t.accumulate(e, ge);
    });
}

NodeId Tape::select_cols_per_row(NodeId a, std::vector<size_t> ids) {
    const Mat& av = value(a);
    require(ids.size() == av.rows, "select_cols_per_row: one id per row");
    Mat out(av.rows, 1);
    for (size_t i = 0; i < av.rows; ++i) {
        require(ids[i] < av.cols, "select_cols_per_row: id out of range");
        out.at(i, 0) = av.at(i, ids[i]);
    }
    return push(std::move(out), needs_grad(a),
                [a, ids = std::move(ids)](Tape& t, const Mat& g) {
        const Mat& av = t.value(a);
        Mat ga(av.rows, av.cols);
        for (size_t i = 0; i < av.rows; ++i) ga.at(i, ids[i]) = g.at(i, 0);
        t.accumulate(a, ga);
    });
}

NodeId Tape::normalize_rows(NodeId a) {
    const Mat& av = value(a);
    Mat out(av.rows, av.cols);
    Mat norms(av.rows, 1);
    for (size_t i = 0; i < av.rows; ++i) {
        const double r = l2_norm(av.row(i));
        if (r == 0.0) fail("normalize_rows: zero-norm embedding at row " + std::to_string(i));
        norms.at(i, 0) = r;
        for (size_t j = 0; j < av.cols; ++j) out.at(i, j) = av.at(i, j) / r;
    }
    const NodeId self_hint = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), needs_grad(a),
                [a, norms, self_hint](Tape& t, const Mat& g) {
        const Mat& y = t.value(self_hint);
        Mat ga(y.rows, y.cols);
        for (size_t i = 0; i < y.rows; ++i) {
            double gy = 0.0;
            for (size_t j = 0; j < y.cols; ++j) gy += g.at(i, j) * y.at(i, j);
            const double inv = 1.0 / norms.at(i, 0);
            for (size_t j = 0; j < y.cols; ++j)
                ga.at(i, j) = (g.at(i, j) - y.at(i, j) * gy) * inv;
        }
        t.accumulate(a, ga);
    });
}

NodeId Tape::logsumexp_rows(NodeId a) {
    const Mat& av = value(a);
    Mat out(av.rows, 1);
    for (size_t i = 0; i < av.rows; ++i) out.at(i, 0) = logsumexp(av.row(i));
    const NodeId self_hint = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), needs_grad(a), [a, self_hint](Tape& t, const Mat& g) {
        const Mat& av = t.value(a);
        const Mat& lse = t.value(self_hint);
        Mat ga(av.rows, av.cols);
        for (size_t i = 0; i < av.rows; ++i)
            for (size_t j = 0; j < av.cols; ++j)
                ga.at(i, j) = g.at(i, 0) * std::exp(av.at(i, j) - lse.at(i, 0));
        t.accumulate(a, ga);
    });
}

NodeId Tape::sum_all(NodeId a) {
    const Mat& av = value(a);
    double s = 0.0;
    for (double v : av.data) s += v;
    Mat out(1, 1);
    out.at(0, 0) = s;
    return push(std::move(out), needs_grad(a), [a](Tape& t, const Mat& g) {
        const Mat& av = t.value(a);
        Mat ga(av.rows, av.cols, g.at(0, 0));
        t.accumulate(a, ga);
    });
}

NodeId Tape::dropout(NodeId a, double rate, Rng& rng) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
    const Mat& av = value(a);
    Mat mask(av.rows, av.cols);
    const double keep = 1.0 - rate;
    for (double& v : mask.data) v = (rng.u01() < keep) ? 1.0 / keep : 0.0;
    Mat out = cscl::hadamard(av, mask);
    return push(std::move(out), needs_grad(a), [a, mask](Tape& t, const Mat& g) {
        t.accumulate(a, cscl::hadamard(g, mask));
    });
}

NodeId Tape::custom_scalar(double value_, const std::vector<NodeId>& parents,
                                 std::vector<Mat> parent_grads) {
    require(parents.size() == parent_grads.size(), "custom_scalar: arity mismatch");
    Mat out(1, 1);
    out.at(0, 0) = value_;
    bool rg = false;
    for (NodeId p : parents) rg = rg || needs_grad(p);
    return push(std::move(out), rg,
                [parents, grads = std::move(parent_grads)](Tape& t, const Mat& g) {
        const double up = g.at(0, 0);
        for (size_t k = 0; k < parents.size(); ++k)
            if (t.needs_grad(parents[k])) t.accumulate(parents[k], cscl::scale(grads[k], up));
    });
}

void Tape::backward(NodeId loss) {
    Node& top = nodes_[static_cast<size_t>(loss)];
    require(top.value.rows == 1 && top.value.cols == 1, "backward: loss must be scalar");
    top.grad = Mat(1, 1, 1.0);
    for (size_t i = static_cast<size_t>(loss) + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
        n.backward(*this, n.grad);
    }
}

}  // namespace cscl
