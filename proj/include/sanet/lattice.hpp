#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace sanet {

// Sweep direction of a lattice DAG. SE starts at the top-left corner and
// every vertex depends on its north/west neighbours.
enum class Direction : std::uint8_t { SE = 0, SW = 1, NW = 2, NE = 3 };

inline constexpr std::array<Direction, 4> kAllDirections{Direction::SE, Direction::SW, Direction::NW,
                                                         Direction::NE};

enum class Connectivity : std::uint8_t { four, eight };

const char* to_string(Direction d);
const char* to_string(Connectivity c);
Connectivity connectivity_from_string(const std::string& name);

Direction mirror_horizontal(Direction d);  // SE <-> SW, NE <-> NW
Direction mirror_vertical(Direction d);    // SE <-> NE, SW <-> NW

// Row step (+1 southward) and column step (+1 eastward) of the sweep.
int row_step(Direction d);
int col_step(Direction d);

using VertexId = std::uint32_t;

struct LatticeDag {
  std::size_t height = 0;
  std::size_t width = 0;
  Direction direction = Direction::SE;
  Connectivity connectivity = Connectivity::eight;
  std::vector<VertexId> topo_order;
  std::vector<std::vector<VertexId>> predecessors;
  std::vector<std::vector<VertexId>> successors;

  std::size_t vertex_count() const { return height * width; }
  VertexId vertex(std::size_t row, std::size_t col) const {
    return static_cast<VertexId>(row * width + col);
  }
  std::size_t edge_count() const;

  // Replaces the processing order; throws unless `order` is a
  // topological sort of this graph.
  void set_order(std::vector<VertexId> order);
};

LatticeDag build_lattice_dag(std::size_t height, std::size_t width, Direction direction,
                             Connectivity connectivity);

// The four-direction decomposition, indexed by Direction.
std::array<LatticeDag, 4> build_lattice_dags(std::size_t height, std::size_t width,
                                             Connectivity connectivity);

bool is_topological_order(const LatticeDag& dag, const std::vector<VertexId>& order);

}  // namespace sanet
