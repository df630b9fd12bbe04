#pragma once

#include "macn/diff/tape.hpp"

namespace macn::vin {

/// Value-iteration module settings. Action channels are internal planning
/// abstractions, decoupled from the three robot actions.
struct VinConfig {
  int iterations = 10;   // K
  int actions = 8;       // A: convolution channels per abstract action
  int kernel_size = 3;   // k (odd)
  int summary_side = 5;  // local value summary is summary_side^2 values
};

/// One approximate VI sweep: q = conv(concat(r_bar, v), kernel) over A
/// channels, then v' = channel-wise max. r_bar and v are [1,H,W]; kernel is
/// [A,2,k,k].
diff::TensorRef vi_step(diff::Tape& tape, diff::TensorRef v,
                        diff::TensorRef r_bar, diff::TensorRef kernel);

/// K sweeps from v_0 = 0. Differentiable end to end. K = 0 returns v_0.
diff::TensorRef vin_forward(diff::Tape& tape, diff::TensorRef r_bar,
                            diff::TensorRef kernel, int iterations);

/// Max-pools a [1,H,W] value map to summary_side x summary_side and
/// flattens. H and W must be divisible by summary_side.
diff::TensorRef local_value_summary(diff::Tape& tape, diff::TensorRef v,
                                    int summary_side = 5);

}  // namespace macn::vin
