#include "cscl/optim.hpp"

#include <cmath>

#include "cscl/common.hpp"

namespace cscl {

void adam_step(ParamSet& params, const std::vector<Mat>& grads, AdamState& state) {
    require(grads.size() == params.items.size(), "adam_step: gradient count mismatch");
    if (state.m.size() != params.items.size()) state.init_for(params);

    state.step_count += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));

    for (size_t i = 0; i < params.items.size(); ++i) {
        Mat& p = params.items[i].second;
        const Mat& g = grads[i];
        require(g.rows == p.rows && g.cols == p.cols, "adam_step: gradient shape mismatch for " + params.items[i].first);
        Mat& mi = state.m[i];
        Mat& vi = state.v[i];
        for (size_t k = 0; k < p.size(); ++k) {
            const double gk = g.data[k];
            mi.data[k] = b1 * mi.data[k] + (1.0 - b1) * gk;
            vi.data[k] = b2 * vi.data[k] + (1.0 - b2) * gk * gk;
            const double mhat = mi.data[k] / bc1;
            const double vhat = vi.data[k] / bc2;
            p.data[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace cscl
