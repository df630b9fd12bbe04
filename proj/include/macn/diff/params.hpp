#pragma once

#include <deque>
#include <span>
#include <string>

#include "macn/diff/tensor.hpp"
#include "macn/util/rng.hpp"

namespace macn::diff {

/// A named learnable tensor living outside any tape. Tapes lease params as
/// leaves and scatter gradients back after backward().
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
};

class ParamStore {
 public:
  /// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) init; fan_in = 0 means zeros.
  Param& add(const std::string& name, Shape shape, int fan_in, Rng& rng);
  Param& add_zeros(const std::string& name, Shape shape);

  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;

  void zero_grads();
  std::size_t count() const { return params_.size(); }
  std::size_t total_values() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Param> params_;  // deque: stable addresses across add()
};

}  // namespace macn::diff
