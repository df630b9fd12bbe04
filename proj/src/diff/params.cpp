#include "macn/diff/params.hpp"

#include <cmath>
#include <stdexcept>

namespace macn::diff {

Param& ParamStore::add(const std::string& name, Shape shape, int fan_in,
                       Rng& rng) {
  if (find(name)) throw std::invalid_argument("duplicate param: " + name);
  Param p;
  p.name = name;
  p.shape = std::move(shape);
  const int n = numel(p.shape);
  p.value.resize(n, 0.0);
  p.grad.resize(n, 0.0);
  if (fan_in > 0) {
    const double bound = std::sqrt(1.0 / fan_in);
    for (double& v : p.value) v = rng.uniform(-bound, bound);
  }
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::add_zeros(const std::string& name, Shape shape) {
  Rng unused(0);
  return add(name, std::move(shape), 0, unused);
}

Param* ParamStore::find(const std::string& name) {
  for (Param& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const Param& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParamStore::zero_grads() {
  for (Param& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.value.size();
  return n;
}

}  // namespace macn::diff
