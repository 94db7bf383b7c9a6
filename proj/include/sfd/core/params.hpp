#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "sfd/core/autodiff.hpp"

namespace sfd::ad {

template <class T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
};

// Binds parameters onto a tape once per forward pass. A parameter used in
// several places (e.g. by both Siamese branches) maps to a single leaf, so its
// gradient is the sum over every use.
template <class T>
class Binder {
public:
    // track = false binds every parameter as a constant (inference only).
    explicit Binder(Tape<T>& tape, bool track = true) : tape_(&tape), track_(track) {}

    Var<T> operator()(const Parameter<T>& p)
    {
        auto it = bound_.find(&p);
        if (it != bound_.end()) {
            return it->second;
        }
        auto v = tape_->leaf(p.value, track_ && p.trainable);
        bound_.emplace(&p, v);
        return v;
    }

    // Replace the leaf used for p (gradient checks route a perturbed copy in).
    void override_with(const Parameter<T>& p, Var<T> v) { bound_[&p] = v; }

    bool is_bound(const Parameter<T>& p) const { return bound_.count(&p) != 0; }
    Var<T> var_of(const Parameter<T>& p) const { return bound_.at(&p); }

    Tape<T>& tape() { return *tape_; }

private:
    Tape<T>* tape_;
    bool track_ = true;
    std::unordered_map<const Parameter<T>*, Var<T>> bound_;
};

// Fully connected layer. Weight is stored [out x in]; forward maps rows
// x [k x in] -> [k x out].
template <class T>
struct Linear {
    Parameter<T> weight;
    Parameter<T> bias;

    Linear() = default;
    Linear(const std::string& name, int in, int out, Rng& rng)
        : weight{name + ".weight", Tensor<T>::uniform({out, in}, rng, -1.0 / std::sqrt(in), 1.0 / std::sqrt(in))},
          bias{name + ".bias", Tensor<T>({1, out}, T(0))}
    {
    }

    int in_features() const { return weight.value.cols(); }
    int out_features() const { return weight.value.rows(); }

    Var<T> forward(Binder<T>& bind, const Var<T>& x) const
    {
        if (x.cols() != in_features()) {
            throw ShapeError(weight.name + ": input has " + std::to_string(x.cols()) + " columns, expected " +
                             std::to_string(in_features()));
        }
        return add_row(matmul(x, transpose(bind(weight))), bind(bias));
    }

    void collect(std::vector<Parameter<T>*>& out)
    {
        out.push_back(&weight);
        out.push_back(&bias);
    }
};

template <class T, class Dst>
void collect_all(std::vector<Parameter<T>*>& out, Dst& module)
{
    module.collect(out);
}

} // namespace sfd::ad
