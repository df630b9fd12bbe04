#include "macn/vin/vin.hpp"

#include <stdexcept>

namespace macn::vin {

using diff::Shape;
using diff::Tape;
using diff::TensorRef;

TensorRef vi_step(Tape& tape, TensorRef v, TensorRef r_bar, TensorRef kernel) {
  const Shape& vs = tape.shape(v);
  const Shape& rs = tape.shape(r_bar);
  const Shape& ks = tape.shape(kernel);
  if (vs.size() != 3 || vs[0] != 1 || rs != vs)
    throw std::invalid_argument("vi_step: v and r_bar must be [1,H,W]");
  if (ks.size() != 4 || ks[1] != 2)
    throw std::invalid_argument("vi_step: kernel must be [A,2,k,k]");
  const int H = vs[1], W = vs[2];
  const int A = ks[0];

  TensorRef stacked =
      tape.reshape(tape.concat2(r_bar, v), {2, H, W});
  TensorRef q = tape.conv2d(stacked, kernel, tape.zeros({A}));
  return tape.channel_max(q);
}

TensorRef vin_forward(Tape& tape, TensorRef r_bar, TensorRef kernel,
                      int iterations) {
  const Shape& rs = tape.shape(r_bar);
  if (rs.size() != 3 || rs[0] != 1)
    throw std::invalid_argument("vin_forward: r_bar must be [1,H,W]");
  TensorRef v = tape.zeros(rs);
  for (int k = 0; k < iterations; ++k) v = vi_step(tape, v, r_bar, kernel);
  return v;
}

TensorRef local_value_summary(Tape& tape, TensorRef v, int summary_side) {
  const Shape& vs = tape.shape(v);
  if (vs.size() != 3 || vs[0] != 1)
    throw std::invalid_argument("local_value_summary: v must be [1,H,W]");
  const int H = vs[1], W = vs[2];
  if (H != W || summary_side <= 0 || H % summary_side != 0)
    throw std::invalid_argument(
        "local_value_summary: extents not divisible by the pool factor");
  const int window = H / summary_side;
  TensorRef pooled = tape.maxpool2d(v, window);
  return tape.reshape(pooled, {summary_side * summary_side});
}

}  // namespace macn::vin
