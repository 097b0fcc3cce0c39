#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsikit/la.hpp"

namespace fsikit {

enum class Subdomain : std::uint8_t { Fluid = 0, Solid = 1 };

/// Boundary / interface segment tags of the channel-with-obstacle family of
/// geometries. GammaI is the fluid-solid interface; it is derived from cell
/// subdomain adjacency and cross-checked against the file.
enum class FacetTag : std::uint8_t {
  GammaFDi = 0,  // inflow
  GammaFD0 = 1,  // no-slip walls
  GammaFN = 2,   // do-nothing outflow
  GammaFDc = 3,  // rigid obstacle boundary wetted by the fluid
  GammaSDc = 4,  // rigid obstacle boundary attached to the solid
  GammaI = 5,    // fluid-solid interface
};

const char* to_string(FacetTag tag);
FacetTag facet_tag_from_string(const std::string& name);

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Facet {
  int v0 = -1, v1 = -1;
  FacetTag tag = FacetTag::GammaFD0;
};

/// Tagged unstructured triangle mesh with fluid/solid subdomains.
/// Immutable after construction; finalize() derives connectivity and
/// validates all invariants.
class Mesh {
 public:
  std::vector<Vec2d> vertices;
  std::vector<std::array<int, 3>> cells;  // counterclockwise
  std::vector<Subdomain> cell_subdomain;
  std::vector<Facet> facets;

  // Derived connectivity, filled by finalize().
  std::vector<std::array<int, 2>> edges;           // unique edges, v0 < v1
  std::vector<std::array<int, 3>> cell_edges;      // edge ids, local edge i opposite vertex i
  std::vector<std::array<int, 2>> edge_cells;      // adjacent cells (-1 if none)
  std::vector<int> facet_edge;                     // edge id of each facet
  std::vector<int> edge_facet;                     // facet id per edge (-1 if untagged)

  void finalize();

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_cells() const { return static_cast<int>(cells.size()); }
  int n_edges() const { return static_cast<int>(edges.size()); }

  double cell_area(int c) const;
  /// Gradients of the barycentric (P1) basis functions of cell c.
  std::array<Vec2d, 3> barycentric_gradients(int c) const;
  double total_area() const;
  bool has_tag(FacetTag tag) const;
  /// Outward normal of the domain on a tagged facet (points out of the fluid
  /// on interface facets).
  Vec2d facet_normal(int facet_id) const;

  /// Local edge index (0..2) of edge (a,b) within cell c, or -1.
  int local_edge(int c, int a, int b) const;

 private:
  void validate() const;
};

Mesh load_mesh(const std::string& path);
void save_mesh(const Mesh& mesh, const std::string& path);

/// Connected chain of tagged parent edges, with arclength parameterization
/// and per-vertex outward unit normals (averaged facet normals).
struct CurveMesh {
  const Mesh* parent = nullptr;
  FacetTag tag = FacetTag::GammaFDc;
  std::vector<int> curve_edges;      // facet ids, in chain order
  std::vector<int> chain_vertices;   // parent vertex ids along the chain
  std::vector<Vec2d> vertex_normal;  // unit, per chain vertex
  std::vector<double> arclength;     // cumulative, per chain vertex
  bool closed = false;

  int n_vertices() const { return static_cast<int>(chain_vertices.size()); }
  int n_segments() const { return static_cast<int>(curve_edges.size()); }
  int n_endpoints() const { return closed ? 0 : 2; }
  double segment_length(int s) const;
  /// Chain vertex indices of segment s (closed curves wrap around).
  std::array<int, 2> segment_vertices(int s) const;
  double total_length() const;
};

CurveMesh extract_curve(const Mesh& mesh, FacetTag tag);

/// min over cells of det(I + Du) for a P1 vector field u given by
/// per-vertex displacements (interleaved x,y). Equals 1 for u = 0.
double min_cell_det(const Mesh& mesh, std::span<const double> u);

}  // namespace fsikit
