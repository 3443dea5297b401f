#include "sanet/lattice.hpp"

#include <stdexcept>

namespace sanet {

const char* to_string(Direction d) {
  switch (d) {
    case Direction::SE: return "SE";
    case Direction::SW: return "SW";
    case Direction::NW: return "NW";
    case Direction::NE: return "NE";
  }
  return "?";
}

const char* to_string(Connectivity c) { return c == Connectivity::four ? "4" : "8"; }

Connectivity connectivity_from_string(const std::string& name) {
  if (name == "4" || name == "four") return Connectivity::four;
  if (name == "8" || name == "eight") return Connectivity::eight;
  throw std::invalid_argument("unknown connectivity '" + name + "'");
}

Direction mirror_horizontal(Direction d) {
  switch (d) {
    case Direction::SE: return Direction::SW;
    case Direction::SW: return Direction::SE;
    case Direction::NW: return Direction::NE;
    case Direction::NE: return Direction::NW;
  }
  return d;
}

Direction mirror_vertical(Direction d) {
  switch (d) {
    case Direction::SE: return Direction::NE;
    case Direction::NE: return Direction::SE;
    case Direction::SW: return Direction::NW;
    case Direction::NW: return Direction::SW;
  }
  return d;
}

int row_step(Direction d) { return (d == Direction::SE || d == Direction::SW) ? 1 : -1; }
int col_step(Direction d) { return (d == Direction::SE || d == Direction::NE) ? 1 : -1; }

std::size_t LatticeDag::edge_count() const {
  std::size_t n = 0;
  for (const auto& p : predecessors) n += p.size();
  return n;
}

bool is_topological_order(const LatticeDag& dag, const std::vector<VertexId>& order) {
  const std::size_t n = dag.vertex_count();
  if (order.size() != n) return false;
  std::vector<std::size_t> position(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    if (order[k] >= n || position[order[k]] != n) return false;
    position[order[k]] = k;
  }
  for (VertexId v = 0; v < n; ++v) {
    for (VertexId u : dag.predecessors[v]) {
      if (position[u] >= position[v]) return false;
    }
  }
  return true;
}

void LatticeDag::set_order(std::vector<VertexId> order) {
  if (!is_topological_order(*this, order)) {
    throw std::invalid_argument(std::string("order is not a topological sort of the ") +
                                to_string(direction) + " lattice DAG");
  }
  topo_order = std::move(order);
}

LatticeDag build_lattice_dag(std::size_t height, std::size_t width, Direction direction,
                             Connectivity connectivity) {
  if (height == 0 || width == 0) {
    throw std::invalid_argument("lattice dimensions must be positive");
  }
  LatticeDag dag;
  dag.height = height;
  dag.width = width;
  dag.direction = direction;
  dag.connectivity = connectivity;
  const std::size_t n = height * width;
  dag.predecessors.resize(n);
  dag.successors.resize(n);
  dag.topo_order.reserve(n);

  const int di = row_step(direction), dj = col_step(direction);
  const auto H = static_cast<long>(height), W = static_cast<long>(width);

  // Predecessors sit one step against the sweep: vertical, horizontal, diagonal.
  std::vector<std::pair<int, int>> offsets{{-di, 0}, {0, -dj}};
  if (connectivity == Connectivity::eight) offsets.emplace_back(-di, -dj);

  for (long i = 0; i < H; ++i) {
    for (long j = 0; j < W; ++j) {
      const VertexId v = dag.vertex(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      for (auto [oi, oj] : offsets) {
        const long pi = i + oi, pj = j + oj;
        if (pi < 0 || pi >= H || pj < 0 || pj >= W) continue;
        const VertexId u = dag.vertex(static_cast<std::size_t>(pi), static_cast<std::size_t>(pj));
        dag.predecessors[v].push_back(u);
        dag.successors[u].push_back(v);
      }
    }
  }

  for (long r = 0; r < H; ++r) {
    const long i = di > 0 ? r : H - 1 - r;
    for (long c = 0; c < W; ++c) {
      const long j = dj > 0 ? c : W - 1 - c;
      dag.topo_order.push_back(dag.vertex(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
    }
  }
  return dag;
}

std::array<LatticeDag, 4> build_lattice_dags(std::size_t height, std::size_t width,
                                             Connectivity connectivity) {
  return {build_lattice_dag(height, width, Direction::SE, connectivity),
          build_lattice_dag(height, width, Direction::SW, connectivity),
          build_lattice_dag(height, width, Direction::NW, connectivity),
          build_lattice_dag(height, width, Direction::NE, connectivity)};
}

}  // namespace sanet
