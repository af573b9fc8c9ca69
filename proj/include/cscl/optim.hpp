#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cscl/mat.hpp"

namespace cscl {

/// Ordered, named parameter collection. Order is the checkpoint and
/// optimizer-state order, so it must be construction-deterministic.
struct ParamSet {
    std::vector<std::pair<std::string, Mat>> items;

    Mat& add(const std::string& name, Mat value) {
        items.emplace_back(name, std::move(value));
        return items.back().second;
    }

    Mat* find(const std::string& name) {
        for (auto& [n, m] : items)
            if (n == name) return &m;
        return nullptr;
    }

    const Mat* find(const std::string& name) const {
        for (const auto& [n, m] : items)
            if (n == name) return &m;
        return nullptr;
    }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& [name, m] : items) n += m.size();
        return n;
    }
};

/// Adam with bias correction. Defaults beta1=0.9, beta2=0.999, eps=1e-8;
/// epsilon is added outside the square root. Mutates only its own moments
/// and the parameters passed to step().
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t step_count = 0;
    std::vector<Mat> m;
    std::vector<Mat> v;

    explicit AdamState(double learning_rate = 1e-3) : lr(learning_rate) {}

    void init_for(const ParamSet& params) {
        m.clear();
        v.clear();
        for (const auto& [name, p] : params.items) {
            m.emplace_back(p.rows, p.cols);
            v.emplace_back(p.rows, p.cols);
        }
        step_count = 0;
    }
};

/// One Adam update. grads[i] must match params.items[i] in shape.
void adam_step(ParamSet& params, const std::vector<Mat>& grads, AdamState& state);

}  // namespace cscl
