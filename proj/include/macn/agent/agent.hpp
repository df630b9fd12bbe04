#pragma once

#include <string>

#include "macn/diff/adam.hpp"
#include "macn/diff/tape.hpp"
#include "macn/gridsim/gridsim.hpp"
#include "macn/mem/memory.hpp"
#include "macn/vin/vin.hpp"

namespace macn::agent {

using diff::Tape;
using diff::TensorRef;

inline constexpr int kActionCount = 3;

enum class Variant { AC, AC_AR, MA_AC, MA_AC_AR };

bool uses_memory(Variant v);
bool uses_aux(Variant v);
const char* to_string(Variant v);
/// Throws std::invalid_argument listing the valid tags.
Variant parse_variant(const std::string& tag);

struct AuxConfig {
  double eta_sp = 2.0;
  double eta_rp = 2.0;
  double lambda_sp = 0.2;
  double lambda_rp = 0.1;
  double lambda_ap = 0.1;
  double overflow_value = 1.5;
};

struct AgentConfig {
  int scan_points = gridsim::kBeamCount;
  int grid_side = 10;  // scan reshaped to grid_side x grid_side
  int conv_filters = 16;
  int phi_dim = 64;
  vin::VinConfig vin;
  mem::MemoryConfig memory;
  int controller_hidden = 128;
  int aux_hidden = 64;
  double max_range = gridsim::kDefaultMaxRange;
  AuxConfig aux;
};

/// Controller / memory state carried across tape boundaries as plain values.
struct RecurrentValues {
  std::vector<double> h, c;
  mem::MemoryValues memory;
};

/// Same state leased onto a live tape.
struct StateRefs {
  TensorRef h, c;
  mem::MemoryState memory;
};

struct EncodeOut {
  TensorRef phi;     // [phi_dim]
  TensorRef r_bar;   // [1,g,g]
  TensorRef kernel;  // [A,2,k,k]
};

struct ForwardOut {
  TensorRef probs;  // [3], on the simplex
  TensorRef value;  // [1]
  TensorRef phi;
  StateRefs state;  // advanced controller/memory state
};

struct AuxOut {
  TensorRef phi_next_pred;     // [phi_dim]
  TensorRef reward_pred;       // [1]
  TensorRef action_pred_probs; // [3]
};

/// The full network: encoder, VI module, controller (DNC or plain LSTM),
/// actor/critic heads, and the three prediction heads. All four variants
/// register the same parameter set in the same order, so initialization is
/// seed-identical across variants.
class Agent {
 public:
  Agent(Variant variant, const AgentConfig& cfg, uint64_t init_seed);

  RecurrentValues initial_state() const;
  StateRefs attach_state(Tape& tape, const RecurrentValues& values) const;
  RecurrentValues detach_state(const Tape& tape, const StateRefs& refs) const;

  EncodeOut encode(Tape& tape, const gridsim::LidarScan& scan) const;
  ForwardOut forward(Tape& tape, const gridsim::LidarScan& scan,
                     const StateRefs& state) const;
  AuxOut aux_forward(Tape& tape, TensorRef phi_t, int action,
                     TensorRef phi_next) const;

  diff::ParamStore& params() { return params_; }
  const diff::ParamStore& params() const { return params_; }
  Variant variant() const { return variant_; }
  const AgentConfig& config() const { return cfg_; }

 private:
  Variant variant_;
  AgentConfig cfg_;
  diff::ParamStore params_;

  diff::Param* p(const std::string& name) const;
};

// Losses and reward shaping (Eqs. of the training objective).

/// 0.5 * ||pred - target||^2; the target enters as a constant.
TensorRef loss_state_prediction(Tape& tape, TensorRef pred, TensorRef target);
TensorRef loss_reward_prediction(Tape& tape, TensorRef pred, double reward);
/// -log p(action), probabilities floored at 1e-12 inside the log.
TensorRef loss_action_prediction(Tape& tape, TensorRef probs, int action);

/// loss when -eta <= loss <= eta, otherwise the fixed overflow value (1.5).
double pseudo_reward(double loss, double eta, double overflow = 1.5);

/// ac + lambda_sp*sp + lambda_rp*rp + lambda_ap*ap; plain ac when the
/// variant has no auxiliary objectives.
TensorRef total_loss(Tape& tape, TensorRef ac_loss, TensorRef sp, TensorRef rp,
                     TensorRef ap, const AuxConfig& cfg, bool use_aux);

double modified_reward(double r_ext, double r_sp_pseudo, double r_rp_pseudo,
                       bool use_aux);

}  // namespace macn::agent
