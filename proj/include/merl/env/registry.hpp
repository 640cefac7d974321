#pragma once

#include <functional>
#include <memory>
#include <string>

#include "merl/env/grid_rooms.hpp"
#include "merl/env/point_mass.hpp"
#include "merl/env/sparse_car.hpp"

namespace merl::env {

inline std::unique_ptr<Env> make_env(const std::string& id, const EnvOverrides& overrides = {}) {
  if (id == "point_mass") return std::make_unique<PointMass2D>(overrides);
  if (id == "sparse_car") return std::make_unique<SparseCar>(overrides);
  if (id == "grid_rooms_a")
    return std::make_unique<GridRooms>(GridRooms::Variant::Pellets, overrides);
  if (id == "grid_rooms_b")
    return std::make_unique<GridRooms>(GridRooms::Variant::Door, overrides);
  throw ConfigError("unknown environment id: " + id);
}

inline EnvFactory env_factory(const std::string& id, const EnvOverrides& overrides = {}) {
  return [id, overrides]() { return make_env(id, overrides); };
}

}  // namespace merl::env
