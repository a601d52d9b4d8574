#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "voxflow/array.hpp"
#include "voxflow/common.hpp"

namespace voxflow {

// Central finite differences against reverse-mode gradients. The numeric side
// only ever calls the forward evaluation, so the two routes stay independent.

struct GradCheckReport {
    bool ok = true;
    double worst_rel = 0.0;
    std::string detail;
};

// f evaluates the scalar loss from the current contents of the arrays;
// analytic gradients are supplied by the caller, one per checked array.
inline GradCheckReport check_gradients(const std::function<double()>& f,
                                       const std::vector<NdArray*>& inputs,
                                       const std::vector<NdArray>& analytic, double h = 1e-5,
                                       double rtol = 1e-4, double atol = 1e-8) {
    GradCheckReport rep;
    if (inputs.size() != analytic.size())
        throw NumericError("check_gradients: input/gradient count mismatch");
    for (std::size_t p = 0; p < inputs.size(); ++p) {
        NdArray& x = *inputs[p];
        if (!analytic[p].same_shape(x))
            throw NumericError("check_gradients: gradient shape " + analytic[p].shape_str() +
                               " vs input " + x.shape_str());
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            const double keep = x[i];
            x[i] = keep + h;
            const double fp = f();
            x[i] = keep - h;
            const double fm = f();
            x[i] = keep;
            const double numeric = (fp - fm) / (2.0 * h);
            const double got = analytic[p][i];
            const double diff = std::abs(numeric - got);
            const double scale = std::max(std::abs(numeric), std::abs(got));
            const double rel = scale > 0.0 ? diff / scale : 0.0;
            if (diff > atol && rel > rtol) {
                rep.ok = false;
                if (rel > rep.worst_rel) {
                    rep.worst_rel = rel;
                    std::ostringstream os;
                    os << "input " << p << " element " << i << ": analytic " << got
                       << " vs numeric " << numeric << " (rel " << rel << ")";
                    rep.detail = os.str();
                }
            } else {
                rep.worst_rel = std::max(rep.worst_rel, rel);
            }
        }
    }
    return rep;
}

}  // namespace voxflow
