#include "macn/mem/memory.hpp"

#include <stdexcept>

namespace macn::mem {

MemoryState fresh_state(Tape& tape, const MemoryConfig& cfg) {
  MemoryState s;
  s.M = tape.zeros({cfg.slots, cfg.word});
  s.usage = tape.zeros({cfg.slots});
  s.read_weights = tape.zeros({cfg.slots});
  s.write_weights = tape.zeros({cfg.slots});
  s.last_read = tape.zeros({cfg.word});
  return s;
}

MemoryValues detach(const Tape& tape, const MemoryState& state) {
  MemoryValues v;
  v.M = tape.val_copy(state.M);
  v.usage = tape.val_copy(state.usage);
  v.read_weights = tape.val_copy(state.read_weights);
  v.write_weights = tape.val_copy(state.write_weights);
  v.last_read = tape.val_copy(state.last_read);
  return v;
}

MemoryState reattach(Tape& tape, const MemoryValues& values,
                     const MemoryConfig& cfg) {
  MemoryState s;
  s.M = tape.constant({cfg.slots, cfg.word}, values.M);
  s.usage = tape.constant({cfg.slots}, values.usage);
  s.read_weights = tape.constant({cfg.slots}, values.read_weights);
  s.write_weights = tape.constant({cfg.slots}, values.write_weights);
  s.last_read = tape.constant({cfg.word}, values.last_read);
  return s;
}

TensorRef content_weights(Tape& tape, TensorRef M, TensorRef key,
                          TensorRef strength) {
  // max(sumsq, 1e-16) under the sqrt floors the norm at 1e-8 and keeps the
  // gradient finite on all-zero rows.
  TensorRef scores = tape.matvec(M, key);
  TensorRef slot_norm =
      tape.vsqrt(tape.vmax_const(tape.row_sum(tape.mul(M, M)), 1e-16));
  TensorRef key_norm =
      tape.vsqrt(tape.vmax_const(tape.sum(tape.mul(key, key)), 1e-16));
  TensorRef cos = tape.div(scores, tape.mul_scalar(slot_norm, key_norm));
  return tape.softmax(tape.mul_scalar(cos, strength));
}

TensorRef allocation_weights(Tape& tape, TensorRef usage) {
  return tape.mul(tape.affine(usage, -1.0, 1.0), tape.cumprod_exclusive(usage));
}

MemoryState mem_write(Tape& tape, const MemoryState& state,
                      const InterfaceVector& iface) {
  TensorRef alloc = allocation_weights(tape, state.usage);
  TensorRef content =
      content_weights(tape, state.M, iface.write_key, iface.write_strength);
  TensorRef blended =
      tape.add(tape.mul_scalar(alloc, iface.alloc_gate),
               tape.mul_scalar(content, tape.affine(iface.alloc_gate, -1.0, 1.0)));
  TensorRef w_w = tape.mul_scalar(blended, iface.write_gate);

  TensorRef keep = tape.affine(tape.outer(w_w, iface.erase), -1.0, 1.0);
  TensorRef m_next =
      tape.add(tape.mul(state.M, keep), tape.outer(w_w, iface.add));
  TensorRef usage_next = tape.sub(tape.add(state.usage, w_w),
                                  tape.mul(state.usage, w_w));

  MemoryState next = state;
  next.M = m_next;
  next.usage = usage_next;
  next.write_weights = w_w;
  return next;
}

std::pair<TensorRef, MemoryState> mem_read(Tape& tape,
                                           const MemoryState& state,
                                           const InterfaceVector& iface) {
  TensorRef w_r =
      content_weights(tape, state.M, iface.read_key, iface.read_strength);
  TensorRef read_vec = tape.vecmat(w_r, state.M);
  MemoryState next = state;
  next.read_weights = w_r;
  next.last_read = read_vec;
  return {read_vec, next};
}

InterfaceVector interface_from(Tape& tape, TensorRef raw, int word) {
  if (tape.size_of(raw) != interface_size(word))
    throw std::invalid_argument("interface_from: raw vector size mismatch");
  InterfaceVector f;
  int off = 0;
  f.read_key = tape.slice(raw, off, word);
  off += word;
  f.read_strength = tape.affine(tape.softplus(tape.slice(raw, off, 1)), 1.0, 1.0);
  off += 1;
  f.write_key = tape.slice(raw, off, word);
  off += word;
  f.write_strength = tape.affine(tape.softplus(tape.slice(raw, off, 1)), 1.0, 1.0);
  off += 1;
  f.erase = tape.sigmoid(tape.slice(raw, off, word));
  off += word;
  f.add = tape.tanh_act(tape.slice(raw, off, word));
  off += word;
  f.alloc_gate = tape.sigmoid(tape.slice(raw, off, 1));
  off += 1;
  f.write_gate = tape.sigmoid(tape.slice(raw, off, 1));
  return f;
}

DncOut dnc_step(Tape& tape, TensorRef input, TensorRef h, TensorRef c,
                const MemoryState& state, const DncWeights& weights) {
  const int word = tape.size_of(state.last_read);
  TensorRef x = tape.concat2(input, state.last_read);
  auto [h_next, c_next] = tape.lstm_step(x, h, c, weights.Wx, weights.Wh,
                                         weights.b);
  TensorRef raw = tape.dense(h_next, weights.Wi, weights.bi,
                             diff::Activation::None);
  InterfaceVector iface = interface_from(tape, raw, word);
  MemoryState written = mem_write(tape, state, iface);
  auto [read_vec, next] = mem_read(tape, written, iface);
  return {tape.concat2(h_next, read_vec), h_next, c_next, next};
}

}  // namespace macn::mem
