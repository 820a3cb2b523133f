#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ltf/tensor.hpp"

namespace ltf::test {

// Central finite differences, h = 1e-5: the gradient oracle the whole
// numerics suite is checked against.
inline std::vector<double> central_diff(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Relative error where the magnitude is visible; absolute below the floor.
inline bool grads_match(const std::vector<double>& ad, const std::vector<double>& fd,
                        double tol, double floor_mag = 1e-8) {
    if (ad.size() != fd.size()) return false;
    for (std::size_t i = 0; i < ad.size(); ++i) {
        const double m = std::max(std::abs(ad[i]), std::abs(fd[i]));
        if (m <= floor_mag) continue;
        if (std::abs(ad[i] - fd[i]) / m > tol) return false;
    }
    return true;
}

// Autodiff gradient of a scalar-valued tensor expression w.r.t. a flat input.
inline std::vector<double> autodiff_grad(
    const std::function<ltf::Tensor(const ltf::Tensor&)>& build,
    const std::vector<double>& x, const std::vector<std::size_t>& shape) {
    ltf::Tape tape;
    ltf::TapeScope scope(tape);
    ltf::Tensor in = ltf::Tensor::from(shape, std::vector<double>(x), true);
    ltf::Tensor out = build(in);
    tape.backward(out);
    const auto g = in.grad();
    return {g.begin(), g.end()};
}

inline double eval_scalar(const std::function<ltf::Tensor(const ltf::Tensor&)>& build,
                          const std::vector<double>& x,
                          const std::vector<std::size_t>& shape) {
    return build(ltf::Tensor::from(shape, std::vector<double>(x))).item();
}

}  // namespace ltf::test
