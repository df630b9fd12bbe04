#include "macn/diff/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace macn::diff {

namespace {

double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

}  // namespace

GradCheckReport grad_check(const BuildFn& build, const Shape& x_shape,
                           const std::vector<double>& x0, double h) {
  std::vector<double> analytic;
  {
    Tape tape;
    TensorRef x = tape.leaf(x_shape, x0, true);
    TensorRef loss = build(tape, x);
    tape.backward(loss);
    auto g = tape.grad(x);
    analytic.assign(g.begin(), g.end());
  }

  auto eval = [&](const std::vector<double>& point) {
    Tape tape;
    TensorRef x = tape.leaf(x_shape, point, false);
    return tape.scalar(build(tape, x));
  };

  GradCheckReport report;
  std::vector<double> probe = x0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    probe[i] = x0[i] + h;
    const double fp = eval(probe);
    probe[i] = x0[i] - h;
    const double fm = eval(probe);
    probe[i] = x0[i];
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = rel_err(analytic[i], numeric);
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_index = static_cast<int>(i);
    }
  }
  return report;
}

GradCheckReport grad_check_params(
    const std::function<TensorRef(Tape&)>& build, ParamStore& store,
    const std::vector<std::pair<Param*, int>>& coords, double h) {
  store.zero_grads();
  {
    Tape tape;
    TensorRef loss = build(tape);
    tape.backward(loss);
  }
  std::vector<double> analytic;
  analytic.reserve(coords.size());
  for (auto [p, idx] : coords) analytic.push_back(p->grad[idx]);

  auto eval = [&]() {
    Tape tape;
    return tape.scalar(build(tape));
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    auto [p, idx] = coords[i];
    const double saved = p->value[idx];
    p->value[idx] = saved + h;
    const double fp = eval();
    p->value[idx] = saved - h;
    const double fm = eval();
    p->value[idx] = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = rel_err(analytic[i], numeric);
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_index = static_cast<int>(i);
    }
  }
  store.zero_grads();
  return report;
}

}  // namespace macn::diff
