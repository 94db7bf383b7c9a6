#pragma once

// DDPM noise schedule with forward corruption and the ancestral reverse step.
// Steps are 1-based; alpha_bar(0) is 1.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sfd/core/tensor.hpp"

namespace sfd::net {

using ad::Tensor;

class NoiseSchedule {
public:
    NoiseSchedule() : NoiseSchedule(linear(100, 1e-4, 0.02)) {}

    explicit NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas))
    {
        if (beta_.empty()) {
            throw std::invalid_argument("noise schedule needs at least one step");
        }
        double prod = 1.0;
        abar_.push_back(1.0);
        for (double b : beta_) {
            if (!(b > 0.0 && b < 1.0)) {
                throw std::invalid_argument("noise schedule: beta must lie in (0, 1)");
            }
            prod *= 1.0 - b;
            abar_.push_back(prod);
        }
    }

    static NoiseSchedule linear(int steps, double beta_first, double beta_last)
    {
        if (steps < 1) {
            throw std::invalid_argument("noise schedule needs at least one step");
        }
        std::vector<double> b(static_cast<std::size_t>(steps));
        for (int i = 0; i < steps; ++i) {
            const double s = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
            b[static_cast<std::size_t>(i)] = beta_first + s * (beta_last - beta_first);
        }
        return NoiseSchedule(std::move(b));
    }

    int steps() const { return static_cast<int>(beta_.size()); }
    double beta(int t) const { return beta_.at(index(t)); }
    double alpha(int t) const { return 1.0 - beta(t); }
    double alpha_bar(int t) const
    {
        if (t < 0 || t > steps()) {
            throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [0, " +
                                    std::to_string(steps()) + "]");
        }
        return abar_[static_cast<std::size_t>(t)];
    }

    // Posterior standard deviation; zero at t = 1 so the last step is the mean.
    double sigma(int t) const
    {
        if (t == 1) {
            index(t);
            return 0.0;
        }
        return std::sqrt(beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t)));
    }

private:
    std::size_t index(int t) const
    {
        if (t < 1 || t > steps()) {
            throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " +
                                    std::to_string(steps()) + "]");
        }
        return static_cast<std::size_t>(t - 1);
    }

    std::vector<double> beta_;
    std::vector<double> abar_;
};

template <class T>
struct Diffused {
    Tensor<T> zt;
    Tensor<T> eps;
};

template <class T>
Tensor<T> diffuse_with(const NoiseSchedule& s, const Tensor<T>& z0, int t, const Tensor<T>& eps)
{
    if (z0.shape() != eps.shape()) {
        throw ad::ShapeError("diffuse: latent and noise shapes differ");
    }
    const double a = std::sqrt(s.alpha_bar(t));
    const double b = std::sqrt(1.0 - s.alpha_bar(t));
    Tensor<T> out(z0.shape());
    for (std::size_t i = 0; i < z0.size(); ++i) {
        out[i] = static_cast<T>(a * z0[i] + b * eps[i]);
    }
    return out;
}

template <class T>
Diffused<T> diffuse_forward(const NoiseSchedule& s, const Tensor<T>& z0, int t, Rng& rng)
{
    if (t < 1 || t > s.steps()) {
        throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [1, " + std::to_string(s.steps()) +
                                "]");
    }
    auto eps = Tensor<T>::randn(z0.shape(), rng);
    auto zt = diffuse_with(s, z0, t, eps);
    return {std::move(zt), std::move(eps)};
}

// (1/sqrt(a_t)) (z_t - (1 - a_t)/sqrt(1 - abar_t) eps_hat)
template <class T>
Tensor<T> reverse_mean(const NoiseSchedule& s, const Tensor<T>& zt, int t, const Tensor<T>& eps_hat)
{
    if (zt.shape() != eps_hat.shape()) {
        throw ad::ShapeError("reverse step: latent and noise shapes differ");
    }
    const double inv = 1.0 / std::sqrt(s.alpha(t));
    const double k = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
    Tensor<T> out(zt.shape());
    for (std::size_t i = 0; i < zt.size(); ++i) {
        out[i] = static_cast<T>(inv * (zt[i] - k * eps_hat[i]));
    }
    return out;
}

template <class T>
Tensor<T> reverse_step(const NoiseSchedule& s, const Tensor<T>& zt, int t, const Tensor<T>& eps_hat, Rng& rng)
{
    auto out = reverse_mean(s, zt, t, eps_hat);
    const double sig = s.sigma(t);
    if (sig > 0.0) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = static_cast<T>(out[i] + sig * rng.normal());
        }
    }
    return out;
}

} // namespace sfd::net
