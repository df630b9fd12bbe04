#pragma once

#include <utility>
#include <vector>

#include "macn/diff/tape.hpp"

namespace macn::mem {

using diff::Tape;
using diff::TensorRef;

struct MemoryConfig {
  int slots = 64;
  int word = 8;
};

/// Memory tensors live on the current tape; gradients flow through every
/// field within one rollout segment.
struct MemoryState {
  TensorRef M;              // [slots, word]
  TensorRef usage;          // [slots], each in [0,1]
  TensorRef read_weights;   // [slots]
  TensorRef write_weights;  // [slots]
  TensorRef last_read;      // [word]
};

/// Plain values for carrying memory across tape boundaries (truncated
/// backprop: values persist, gradients do not).
struct MemoryValues {
  std::vector<double> M, usage, read_weights, write_weights, last_read;
};

MemoryState fresh_state(Tape& tape, const MemoryConfig& cfg);
MemoryValues detach(const Tape& tape, const MemoryState& state);
MemoryState reattach(Tape& tape, const MemoryValues& values,
                     const MemoryConfig& cfg);

/// Post-activation interface emitted by the controller. Strengths are
/// softplus(x)+1, gates and erase sigmoid, add tanh.
struct InterfaceVector {
  TensorRef read_key;        // [word]
  TensorRef read_strength;   // [1]
  TensorRef write_key;       // [word]
  TensorRef write_strength;  // [1]
  TensorRef erase;           // [word]
  TensorRef add;             // [word]
  TensorRef alloc_gate;      // [1]
  TensorRef write_gate;      // [1]
};

constexpr int interface_size(int word) { return 4 * word + 4; }

/// softmax over slots of strength * cosine(M[i], key), norms floored at 1e-8.
TensorRef content_weights(Tape& tape, TensorRef M, TensorRef key,
                          TensorRef strength);

/// Index-ordered usage allocation: a_i = (1 - u_i) * prod_{j<i} u_j.
/// Sums to 1 - prod_j u_j, so it concentrates on the first unused slot and
/// stays on the weight simplex.
TensorRef allocation_weights(Tape& tape, TensorRef usage);

MemoryState mem_write(Tape& tape, const MemoryState& state,
                      const InterfaceVector& iface);

std::pair<TensorRef, MemoryState> mem_read(Tape& tape,
                                           const MemoryState& state,
                                           const InterfaceVector& iface);

/// Tape handles for the controller parameters.
struct DncWeights {
  TensorRef Wx;  // [4u, input+word]
  TensorRef Wh;  // [4u, u]
  TensorRef b;   // [4u]
  TensorRef Wi;  // [interface_size, u]
  TensorRef bi;  // [interface_size]
};

struct DncOut {
  TensorRef output;  // concat(h', read_vector)
  TensorRef h;
  TensorRef c;
  MemoryState state;
};

InterfaceVector interface_from(Tape& tape, TensorRef raw, int word);

/// LSTM controller consumes concat(input, last_read); its hidden state maps
/// to the interface; write then read are applied.
DncOut dnc_step(Tape& tape, TensorRef input, TensorRef h, TensorRef c,
                const MemoryState& state, const DncWeights& weights);

}  // namespace macn::mem
