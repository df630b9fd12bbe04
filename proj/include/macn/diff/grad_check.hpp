#pragma once

#include <functional>

#include "macn/diff/tape.hpp"

namespace macn::diff {

/// Builds the scalar function under test on a fresh tape. The input leaf is
/// created by the checker with requires_grad set.
using BuildFn = std::function<TensorRef(Tape&, TensorRef)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_index = -1;
};

/// Central-difference check of backward() against (f(x+h)-f(x-h))/2h at a
/// single point. Relative error uses denominator max(|a|,|b|,1e-8).
GradCheckReport grad_check(const BuildFn& build, const Shape& x_shape,
                           const std::vector<double>& x0, double h = 1e-5);

/// Same check for a scalar loss over ParamStore entries. `coords` lists the
/// (param, flat index) coordinates to probe; `build` reads the store.
GradCheckReport grad_check_params(
    const std::function<TensorRef(Tape&)>& build, ParamStore& store,
    const std::vector<std::pair<Param*, int>>& coords, double h = 1e-5);

}  // namespace macn::diff
