#pragma once

#include <cmath>
#include <vector>

#include "vmct/errors.hpp"
#include "vmct/tensor.hpp"

namespace vmct {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Classic Adam with bias correction. Moment buffers live on the ParamArray;
// the shared step counter lives here and is bumped once per call.
template <typename T>
struct AdamT {
    AdamConfig cfg;
    long long step_count = 0;

    void step(const std::vector<ParamArrayT<T>*>& params) {
        ++step_count;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count));
        for (ParamArrayT<T>* p : params) {
            if (p == nullptr) throw ArgumentError("adam: null parameter");
            if (p->grad.size() != p->values.size())
                throw ContractError("adam: parameter '" + p->name + "' has no gradient");
            if (p->adam_m.size() != p->values.size()) {
                p->adam_m.assign(p->values.size(), T(0));
                p->adam_v.assign(p->values.size(), T(0));
            }
            for (std::size_t i = 0; i < p->values.size(); ++i) {
                const double g = static_cast<double>(p->grad[i]);
                if (!std::isfinite(g))
                    throw NumericError("adam: non-finite gradient in '" + p->name + "'");
                const double m = cfg.beta1 * static_cast<double>(p->adam_m[i]) + (1.0 - cfg.beta1) * g;
                const double v = cfg.beta2 * static_cast<double>(p->adam_v[i]) + (1.0 - cfg.beta2) * g * g;
                p->adam_m[i] = static_cast<T>(m);
                p->adam_v[i] = static_cast<T>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                p->values[i] =
                    static_cast<T>(static_cast<double>(p->values[i]) -
                                   cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
            }
        }
    }
};

using Adam = AdamT<float>;

}  // namespace vmct
