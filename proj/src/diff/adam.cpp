#include "macn/diff/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace macn::diff {

Adam::Adam(const ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
  for (const Param& p : store) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(ParamStore& store) {
  if (store.count() != m_.size())
    throw std::invalid_argument("adam: store layout changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t idx = 0;
  for (Param& p : store) {
    std::vector<double>& m = m_[idx];
    std::vector<double>& v = v_[idx];
    if (m.size() != p.value.size())
      throw std::invalid_argument("adam: param extent changed: " + p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    ++idx;
  }
}

}  // namespace macn::diff
