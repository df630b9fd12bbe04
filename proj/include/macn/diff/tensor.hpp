#pragma once

#include <numeric>
#include <vector>

namespace macn::diff {

using Shape = std::vector<int>;

inline int numel(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

/// Handle to a node on a Tape. Valid only for the tape that produced it
/// and only until that tape is cleared.
struct TensorRef {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Activation { None, Relu, Tanh };

}  // namespace macn::diff
