#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfd/core/rng.hpp"

namespace sfd::ad {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline std::string to_string(const Shape& s)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        os << (i ? "," : "") << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t numel(const Shape& s)
{
    std::size_t n = 1;
    for (int d : s) {
        if (d <= 0) {
            throw ShapeError("non-positive dimension in shape " + to_string(s));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

// Dense row-major tensor. Most of the library works with rank-2 tensors
// (rows x cols); scalars are stored as shape {1, 1}.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() : shape_{1, 1}, data_(1, T(0)) {}

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (numel(shape_) != data_.size()) {
            throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             to_string(shape_));
        }
    }

    static Tensor scalar(T v) { return Tensor({1, 1}, std::vector<T>{v}); }

    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0)
    {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) {
            v = static_cast<T>(stddev * rng.normal());
        }
        return t;
    }

    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi)
    {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) {
            v = static_cast<T>(rng.uniform(lo, hi));
        }
        return t;
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rows() const { return shape_.at(0); }
    int cols() const { return rank() >= 2 ? shape_[1] : 1; }
    std::size_t size() const { return data_.size(); }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
    const T& at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

    T item() const
    {
        if (data_.size() != 1) {
            throw ShapeError("item() on tensor of shape " + to_string(shape_));
        }
        return data_[0];
    }

    bool all_finite() const
    {
        for (const auto& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) {
                return false;
            }
        }
        return true;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape s) const { return Tensor(std::move(s), data_); }

    template <class U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) {
            out[i] = static_cast<U>(data_[i]);
        }
        return Tensor<U>(shape_, std::move(out));
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <class T>
void require_finite(const Tensor<T>& t, const char* where)
{
    if (!t.all_finite()) {
        throw NonFiniteError(std::string("non-finite value produced by ") + where);
    }
}

} // namespace sfd::ad
