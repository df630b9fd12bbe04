#include "macn/gridsim/gridsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace macn::gridsim {

const char* to_string(DoneCause c) {
  switch (c) {
    case DoneCause::Running: return "running";
    case DoneCause::Goal: return "goal";
    case DoneCause::Collision: return "collision";
    case DoneCause::Timeout: return "timeout";
  }
  return "?";
}

const char* to_string(Action a) {
  switch (a) {
    case Action::Forward: return "forward";
    case Action::TurnLeft: return "turn_left";
    case Action::TurnRight: return "turn_right";
  }
  return "?";
}

bool GridMap::is_goal(int c) const {
  return std::binary_search(goal_cells.begin(), goal_cells.end(), c);
}

namespace {

[[noreturn]] void parse_fail(int line, int col, const std::string& what) {
  std::ostringstream os;
  os << "map parse error at line " << line << ", column " << col << ": "
     << what;
  throw MapParseError(os.str());
}

bool parse_directive(const std::string& line, const std::string& key,
                     std::string* out) {
  if (line.rfind(key, 0) != 0) return false;
  std::string value = line.substr(key.size());
  const auto b = value.find_first_not_of(" \t");
  const auto e = value.find_last_not_of(" \t\r");
  *out = b == std::string::npos ? "" : value.substr(b, e - b + 1);
  return true;
}

Heading parse_heading(const std::string& s, int line) {
  if (s == "N") return Heading::North;
  if (s == "E") return Heading::East;
  if (s == "S") return Heading::South;
  if (s == "W") return Heading::West;
  parse_fail(line, 1, "spawn_heading must be one of N, E, S, W");
}

}  // namespace

GridMap load_map(const std::string& text) {
  GridMap map;
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> rows;
  int line_no = 0;
  int grid_first_line = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string value;
    if (rows.empty() && parse_directive(line, "world:", &value)) {
      map.world_id = value;
      continue;
    }
    if (rows.empty() && parse_directive(line, "spawn_heading:", &value)) {
      map.spawn_heading = parse_heading(value, line_no);
      continue;
    }
    if (line.empty() && rows.empty()) continue;  // leading blank lines
    if (line.empty()) break;                     // blank line ends the grid
    if (rows.empty()) grid_first_line = line_no;
    rows.push_back(line);
  }
  if (rows.empty()) parse_fail(line_no, 1, "no grid rows");

  map.height = static_cast<int>(rows.size());
  map.width = static_cast<int>(rows[0].size());
  map.occupancy.assign(static_cast<size_t>(map.width) * map.height, 0);

  int spawn_count = 0;
  for (int y = 0; y < map.height; ++y) {
    const std::string& row = rows[y];
    const int file_line = grid_first_line + y;
    if (static_cast<int>(row.size()) != map.width)
      parse_fail(file_line, static_cast<int>(row.size()) + 1,
                 "row width differs from first row (map must be rectangular)");
    for (int x = 0; x < map.width; ++x) {
      const int c = map.cell(x, y);
      switch (row[x]) {
        case '#': map.occupancy[c] = -1; break;
        case '.': break;
        case 'G': map.goal_cells.push_back(c); break;
        case 'B': map.optional_obstacle.push_back(c); break;
        case 'S':
          ++spawn_count;
          map.spawn_cell = c;
          break;
        default:
          parse_fail(file_line, x + 1,
                     std::string("invalid character '") + row[x] + "'");
      }
    }
  }

  if (spawn_count == 0) parse_fail(grid_first_line, 1, "no spawn cell (S)");
  if (spawn_count > 1)
    parse_fail(grid_first_line, 1, "more than one spawn cell (S)");
  if (map.goal_cells.empty())
    parse_fail(grid_first_line, 1, "no goal cells (G)");

  // Closed world: every border cell must be occupied.
  for (int x = 0; x < map.width; ++x) {
    if (map.occupancy[map.cell(x, 0)] != -1) parse_fail(grid_first_line, x + 1, "boundary cell is not occupied");
    if (map.occupancy[map.cell(x, map.height - 1)] != -1)
      parse_fail(grid_first_line + map.height - 1, x + 1,
                 "boundary cell is not occupied");
  }
  for (int y = 0; y < map.height; ++y) {
    if (map.occupancy[map.cell(0, y)] != -1)
      parse_fail(grid_first_line + y, 1, "boundary cell is not occupied");
    if (map.occupancy[map.cell(map.width - 1, y)] != -1)
      parse_fail(grid_first_line + y, map.width, "boundary cell is not occupied");
  }

  std::sort(map.goal_cells.begin(), map.goal_cells.end());
  std::sort(map.optional_obstacle.begin(), map.optional_obstacle.end());
  return map;
}

GridMap load_map_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MapParseError("cannot open map file: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return load_map(buf.str());
}

double heading_radians(Heading h) {
  // x grows east, y grows south (row-major screen coordinates).
  switch (h) {
    case Heading::East: return 0.0;
    case Heading::South: return std::numbers::pi / 2.0;
    case Heading::West: return std::numbers::pi;
    case Heading::North: return -std::numbers::pi / 2.0;
  }
  return 0.0;
}

double beam_angle(int beam) {
  const double half = kFovDegrees / 2.0;
  const double deg = -half + kFovDegrees * beam / (kBeamCount - 1.0);
  return deg * std::numbers::pi / 180.0;
}

Heading rotate_left(Heading h) {
  switch (h) {
    case Heading::North: return Heading::West;
    case Heading::West: return Heading::South;
    case Heading::South: return Heading::East;
    case Heading::East: return Heading::North;
  }
  return h;
}

Heading rotate_right(Heading h) {
  switch (h) {
    case Heading::North: return Heading::East;
    case Heading::East: return Heading::South;
    case Heading::South: return Heading::West;
    case Heading::West: return Heading::North;
  }
  return h;
}

namespace {

struct RayHit {
  double range;
  bool hit;
};

/// Marches one beam in kRayStep increments from the pose cell center.
/// The beam stops inside the first occupied cell; the reported range is the
/// march distance at that sample, capped at max_range.
RayHit march_ray(const MapInstance& inst, double ox, double oy, double angle,
                 double max_range) {
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  const int steps = static_cast<int>(std::round(max_range / kRayStep));
  for (int k = 1; k <= steps; ++k) {
    const double t = k * kRayStep;
    const int cx = static_cast<int>(std::floor(ox + t * dx));
    const int cy = static_cast<int>(std::floor(oy + t * dy));
    if (inst.occupied(cx, cy)) return {t, true};
  }
  return {max_range, false};
}

}  // namespace

LidarScan raycast_scan(const MapInstance& inst, const Pose& pose,
                       double max_range) {
  LidarScan scan;
  const double ox = pose.x + 0.5;
  const double oy = pose.y + 0.5;
  const double base = heading_radians(pose.heading);
  for (int b = 0; b < kBeamCount; ++b) {
    scan.ranges[b] = march_ray(inst, ox, oy, base + beam_angle(b), max_range).range;
  }
  return scan;
}

ObservationVector visibility_observation(const MapInstance& inst,
                                         const Pose& pose, double max_range) {
  ObservationVector obs;
  obs.z.assign(inst.occupancy.size(), 0);
  const double ox = pose.x + 0.5;
  const double oy = pose.y + 0.5;
  const double base = heading_radians(pose.heading);
  for (int b = 0; b < kBeamCount; ++b) {
    const double angle = base + beam_angle(b);
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    const RayHit hit = march_ray(inst, ox, oy, angle, max_range);
    const int steps = static_cast<int>(std::round(hit.range / kRayStep));
    for (int k = 1; k <= steps; ++k) {
      const double t = k * kRayStep;
      const int cx = static_cast<int>(std::floor(ox + t * dx));
      const int cy = static_cast<int>(std::floor(oy + t * dy));
      if (!inst.map->in_bounds(cx, cy)) break;
      const int c = inst.map->cell(cx, cy);
      obs.z[c] = inst.occupancy[c];
    }
  }
  return obs;
}

void MapEstimate::fold(const ObservationVector& obs) {
  for (std::size_t i = 0; i < z_sum.size(); ++i) {
    z_sum[i] += obs.z[i];
    m_hat[i] = static_cast<int8_t>(std::max<int32_t>(z_sum[i], -1));
  }
}

double external_reward(DoneCause cause, const std::string& world_id) {
  double goal_bonus;
  if (world_id == "circuit" || world_id == "office") {
    goal_bonus = 500.0;
  } else if (world_id == "circuit2") {
    goal_bonus = 1000.0;
  } else {
    throw std::invalid_argument("unknown benchmark world: '" + world_id + "'");
  }
  switch (cause) {
    case DoneCause::Running: return 1.0;
    case DoneCause::Goal: return goal_bonus;
    case DoneCause::Collision: return -1.0;
    case DoneCause::Timeout: return 0.0;
  }
  return 0.0;
}

StepResult step(const MapInstance& inst, const Pose& pose, Action action,
                int step_index, int episode_cap) {
  if (step_index >= episode_cap)
    throw std::invalid_argument("step: episode already at cap");
  StepResult res;
  res.next_pose = pose;
  DoneCause cause = DoneCause::Running;

  if (action == Action::TurnLeft) {
    res.next_pose.heading = rotate_left(pose.heading);
  } else if (action == Action::TurnRight) {
    res.next_pose.heading = rotate_right(pose.heading);
  } else {
    int tx = pose.x, ty = pose.y;
    switch (pose.heading) {
      case Heading::North: --ty; break;
      case Heading::South: ++ty; break;
      case Heading::East: ++tx; break;
      case Heading::West: --tx; break;
    }
    if (inst.occupied(tx, ty)) {
      cause = DoneCause::Collision;  // pose unchanged
    } else {
      res.next_pose.x = tx;
      res.next_pose.y = ty;
    }
  }

  if (cause == DoneCause::Running) {
    const int c = inst.map->cell(res.next_pose.x, res.next_pose.y);
    if (inst.map->is_goal(c)) {
      cause = DoneCause::Goal;
    } else if (step_index == episode_cap - 1) {
      cause = DoneCause::Timeout;
    }
  }

  res.cause = cause;
  res.done = cause != DoneCause::Running;
  res.reward = external_reward(cause, inst.map->world_id);
  return res;
}

MapInstance make_instance(const GridMap& map, bool obstacle_present) {
  MapInstance inst;
  inst.map = &map;
  inst.occupancy = map.occupancy;
  inst.obstacle_present = obstacle_present && !map.optional_obstacle.empty();
  if (inst.obstacle_present) {
    for (int c : map.optional_obstacle) inst.occupancy[c] = -1;
  }
  return inst;
}

std::pair<Pose, MapInstance> reset(const GridMap& map, Rng& rng) {
  const bool present = rng.bernoulli(kObstaclePresentProb);
  Pose pose{map.spawn_cell % map.width, map.spawn_cell / map.width,
            map.spawn_heading};
  return {pose, make_instance(map, present)};
}

Env::Env(GridMap map, uint64_t seed, double max_range, int episode_cap)
    : map_(std::move(map)),
      rng_(seed),
      max_range_(max_range),
      episode_cap_(episode_cap) {
  if (map_.world_id.empty())
    throw std::invalid_argument("Env: map carries no 'world:' directive");
  external_reward(DoneCause::Goal, map_.world_id);  // validates the id
  reset();
}

void Env::reset() {
  auto [pose, inst] = gridsim::reset(map_, rng_);
  pose_ = pose;
  inst_ = std::move(inst);
  inst_.map = &map_;
  step_index_ = 0;
  done_ = false;
  scan_ = raycast_scan(inst_, pose_, max_range_);
}

void Env::reset_forced(bool obstacle_present) {
  rng_.next_u64();  // keep the stream aligned with unforced resets
  pose_ = Pose{map_.spawn_cell % map_.width, map_.spawn_cell / map_.width,
               map_.spawn_heading};
  inst_ = make_instance(map_, obstacle_present);
  step_index_ = 0;
  done_ = false;
  scan_ = raycast_scan(inst_, pose_, max_range_);
}

StepResult Env::step(Action a) {
  if (done_) throw std::logic_error("Env::step called on finished episode");
  StepResult res = gridsim::step(inst_, pose_, a, step_index_, episode_cap_);
  pose_ = res.next_pose;
  ++step_index_;
  done_ = res.done;
  scan_ = raycast_scan(inst_, pose_, max_range_);
  return res;
}

}  // namespace macn::gridsim
