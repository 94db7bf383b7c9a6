#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "sfd/core/autodiff.hpp"

namespace sfd::ad {

struct NondeterministicFunction : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class T>
using TapeBuilder = std::function<Var<T>(Tape<T>&, const Var<T>&)>;

struct FdResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = false;
};

// Compares the autodiff gradient of a scalar function against central
// differences, coordinate by coordinate:
//   err_i = |g_ad - g_fd| / (|g_fd| + 1e-8)
template <class T>
FdResult finite_diff_check(const TapeBuilder<T>& f, const Tensor<T>& point, double tol, double h = 1e-3)
{
    auto eval = [&](const Tensor<T>& x) {
        Tape<T> tape;
        auto in = tape.leaf(x, false);
        return static_cast<double>(f(tape, in).value().item());
    };

    Tape<T> tape;
    auto in = tape.leaf(point, true);
    auto out = f(tape, in);
    const auto grads = backward(out);
    const Tensor<T>& g = grads[in];

    const double base = static_cast<double>(out.value().item());
    if (eval(point) != base) {
        throw NondeterministicFunction("finite_diff_check: function value changed between identical evaluations");
    }

    FdResult res;
    Tensor<T> x = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const T orig = x[i];
        x[i] = static_cast<T>(orig + h);
        const double fp = eval(x);
        x[i] = static_cast<T>(orig - h);
        const double fm = eval(x);
        x[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double err = std::abs(static_cast<double>(g[i]) - fd) / (std::abs(fd) + 1e-8);
        if (err > res.max_rel_error) {
            res.max_rel_error = err;
            res.worst_index = i;
        }
    }
    res.passed = res.max_rel_error < tol;
    return res;
}

} // namespace sfd::ad
