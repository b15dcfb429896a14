#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slcvae/autodiff.hpp"
#include "slcvae/tensor.hpp"

namespace slcvae {

struct AdamState {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;
};

// One optimizer instance holds state for every parameter of the model,
// keyed by name; each phase steps only its own subset, so moments of the
// other phase's parameters are left untouched.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Parameter*>& params) {
        for (Parameter* p : params) {
            AdamState& s = states_[p->name];
            if (s.m.size() == 0) {
                s.m = Tensor::zeros_like(p->value);
                s.v = Tensor::zeros_like(p->value);
            }
            s.t += 1;
            const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
            const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const double g = p->grad[i];
                s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
                s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
                const double mhat = s.m[i] / bc1;
                const double vhat = s.v[i] / bc2;
                p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    double lr() const { return lr_; }
    std::map<std::string, AdamState>& states() { return states_; }
    const std::map<std::string, AdamState>& states() const { return states_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::map<std::string, AdamState> states_;
};

}  // namespace slcvae
