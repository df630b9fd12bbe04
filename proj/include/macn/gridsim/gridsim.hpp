#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "macn/util/rng.hpp"

namespace macn::gridsim {

inline constexpr int kBeamCount = 100;
inline constexpr double kFovDegrees = 240.0;
inline constexpr double kDefaultMaxRange = 10.0;  // cells
inline constexpr double kRayStep = 0.1;           // cells per march step
inline constexpr int kEpisodeCap = 500;
inline constexpr double kObstaclePresentProb = 0.4;

enum class Heading : uint8_t { North, East, South, West };
enum class Action : uint8_t { Forward, TurnLeft, TurnRight };
enum class DoneCause : uint8_t { Running, Goal, Collision, Timeout };

const char* to_string(DoneCause c);
const char* to_string(Action a);

struct MapParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Static world description parsed from map text. Occupancy holds the base
/// labeling with optional-obstacle ('B') cells free; an episode instance
/// decides their presence.
struct GridMap {
  int width = 0;
  int height = 0;
  std::vector<int8_t> occupancy;       // -1 occupied, 0 free
  std::vector<int> goal_cells;         // sorted cell indices
  int spawn_cell = -1;
  Heading spawn_heading = Heading::East;
  std::vector<int> optional_obstacle;  // sorted cell indices
  std::string world_id;                // from the "world:" directive

  int cell(int x, int y) const { return y * width + x; }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  bool is_goal(int c) const;
};

struct Pose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::East;
};

struct LidarScan {
  std::array<double, kBeamCount> ranges{};
};

/// z[s] = m[s] on every cell some beam traverses (hit cell included),
/// 0 elsewhere.
struct ObservationVector {
  std::vector<int8_t> z;
};

struct StepResult {
  Pose next_pose;
  double reward = 0.0;
  bool done = false;
  DoneCause cause = DoneCause::Running;
};

/// Running fold of observations: m_hat = max(sum_t z_t, -1) per cell.
struct MapEstimate {
  std::vector<int32_t> z_sum;
  std::vector<int8_t> m_hat;

  explicit MapEstimate(int cells = 0) : z_sum(cells, 0), m_hat(cells, 0) {}
  void fold(const ObservationVector& obs);
};

/// One episode's concrete occupancy (optional obstacle resolved).
struct MapInstance {
  const GridMap* map = nullptr;
  std::vector<int8_t> occupancy;
  bool obstacle_present = false;

  bool occupied(int x, int y) const {
    return !map->in_bounds(x, y) || occupancy[map->cell(x, y)] != 0;
  }
};

GridMap load_map(const std::string& text);
GridMap load_map_file(const std::string& path);

/// Angle of beam i relative to the pose heading, radians. Beams sweep the
/// forward arc uniformly from -FOV/2 to +FOV/2.
double beam_angle(int beam);
double heading_radians(Heading h);
Heading rotate_left(Heading h);
Heading rotate_right(Heading h);

LidarScan raycast_scan(const MapInstance& inst, const Pose& pose,
                       double max_range = kDefaultMaxRange);

ObservationVector visibility_observation(const MapInstance& inst,
                                         const Pose& pose,
                                         double max_range = kDefaultMaxRange);

/// Goal bonus per benchmark world; throws on ids outside
/// {circuit, circuit2, office}.
double external_reward(DoneCause cause, const std::string& world_id);

StepResult step(const MapInstance& inst, const Pose& pose, Action action,
                int step_index, int episode_cap = kEpisodeCap);

/// Spawn pose plus an instance with the optional obstacle present with
/// probability kObstaclePresentProb (one draw from rng per call).
std::pair<Pose, MapInstance> reset(const GridMap& map, Rng& rng);
MapInstance make_instance(const GridMap& map, bool obstacle_present);

/// Per-episode convenience wrapper owning pose, step counter, cached scan,
/// and the reset RNG stream. All underlying operations stay pure.
class Env {
 public:
  Env(GridMap map, uint64_t seed, double max_range = kDefaultMaxRange,
      int episode_cap = kEpisodeCap);

  void reset();
  void reset_forced(bool obstacle_present);

  StepResult step(Action a);

  const LidarScan& scan() const { return scan_; }
  const Pose& pose() const { return pose_; }
  const GridMap& map() const { return map_; }
  const MapInstance& instance() const { return inst_; }
  int steps_taken() const { return step_index_; }
  bool done() const { return done_; }
  double max_range() const { return max_range_; }
  int episode_cap() const { return episode_cap_; }

 private:
  GridMap map_;
  MapInstance inst_;
  Pose pose_;
  LidarScan scan_;
  Rng rng_;
  double max_range_;
  int episode_cap_;
  int step_index_ = 0;
  bool done_ = false;
};

}  // namespace macn::gridsim
