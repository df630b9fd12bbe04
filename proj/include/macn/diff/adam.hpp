#pragma once

#include <cstdint>
#include <vector>

#include "macn/diff/params.hpp"

namespace macn::diff {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a ParamStore. Moment buffers are keyed by the
/// store's registration order, which is fixed per agent construction.
class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig cfg = {});

  /// One update from the gradients currently held in the store.
  void step(ParamStore& store);

  int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace macn::diff
