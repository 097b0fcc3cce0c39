#include "fsikit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace fsikit {

namespace {
constexpr const char* kTagNames[] = {"GammaFDi", "GammaFD0", "GammaFN",
                                     "GammaFDc", "GammaSDc", "GammaI"};
}

const char* to_string(FacetTag tag) { return kTagNames[static_cast<int>(tag)]; }

FacetTag facet_tag_from_string(const std::string& name) {
  for (int i = 0; i < 6; ++i)
    if (name == kTagNames[i]) return static_cast<FacetTag>(i);
  throw MeshError("unknown facet tag '" + name + "'");
}

double Mesh::cell_area(int c) const {
  const auto& t = cells[c];
  const Vec2d a = vertices[t[0]], b = vertices[t[1]], d = vertices[t[2]];
  return 0.5 * cross(b - a, d - a);
}

std::array<Vec2d, 3> Mesh::barycentric_gradients(int c) const {
  const auto& t = cells[c];
  const Vec2d p0 = vertices[t[0]], p1 = vertices[t[1]], p2 = vertices[t[2]];
  const double inv2a = 1.0 / (2.0 * cell_area(c));
  // grad lambda_i is the inward-rotated opposite edge divided by 2*area
  return {Vec2d{(p1.y - p2.y) * inv2a, (p2.x - p1.x) * inv2a},
          Vec2d{(p2.y - p0.y) * inv2a, (p0.x - p2.x) * inv2a},
          Vec2d{(p0.y - p1.y) * inv2a, (p1.x - p0.x) * inv2a}};
}

double Mesh::total_area() const {
  double s = 0.0;
  for (int c = 0; c < n_cells(); ++c) s += cell_area(c);
  return s;
}

bool Mesh::has_tag(FacetTag tag) const {
  for (const auto& f : facets)
    if (f.tag == tag) return true;
  return false;
}

int Mesh::local_edge(int c, int a, int b) const {
  const auto& t = cells[c];
  for (int i = 0; i < 3; ++i) {
    const int u = t[(i + 1) % 3], v = t[(i + 2) % 3];
    if ((u == a && v == b) || (u == b && v == a)) return i;
  }
  return -1;
}

Vec2d Mesh::facet_normal(int facet_id) const {
  const Facet& f = facets[facet_id];
  const int e = facet_edge[facet_id];
  // Pick the fluid cell if there is one, otherwise the single adjacent cell.
  int c = edge_cells[e][0];
  if (edge_cells[e][1] >= 0 && cell_subdomain[edge_cells[e][1]] == Subdomain::Fluid &&
      cell_subdomain[c] != Subdomain::Fluid)
    c = edge_cells[e][1];
  const auto& t = cells[c];
  int opp = -1;
  for (int i = 0; i < 3; ++i)
    if (t[i] != f.v0 && t[i] != f.v1) opp = t[i];
  Vec2d tv = vertices[f.v1] - vertices[f.v0];
  Vec2d n{tv.y, -tv.x};
  const Vec2d mid = 0.5 * (vertices[f.v0] + vertices[f.v1]);
  if (dot(n, vertices[opp] - mid) > 0.0) n = -1.0 * n;
  const double len = norm(n);
  return {n.x / len, n.y / len};
}

void Mesh::finalize() {
  edges.clear();
  cell_edges.assign(cells.size(), {-1, -1, -1});
  std::map<std::pair<int, int>, int> edge_id;
  for (int c = 0; c < n_cells(); ++c) {
    for (int i = 0; i < 3; ++i) {
      int a = cells[c][(i + 1) % 3], b = cells[c][(i + 2) % 3];
      if (a > b) std::swap(a, b);
      auto [it, inserted] = edge_id.try_emplace({a, b}, static_cast<int>(edges.size()));
      if (inserted) edges.push_back({a, b});
      cell_edges[c][i] = it->second;
    }
  }
  edge_cells.assign(edges.size(), {-1, -1});
  for (int c = 0; c < n_cells(); ++c)
    for (int i = 0; i < 3; ++i) {
      auto& ec = edge_cells[cell_edges[c][i]];
      (ec[0] < 0 ? ec[0] : ec[1]) = c;
    }

  facet_edge.assign(facets.size(), -1);
  edge_facet.assign(edges.size(), -1);
  for (int fi = 0; fi < static_cast<int>(facets.size()); ++fi) {
    int a = facets[fi].v0, b = facets[fi].v1;
    if (a > b) std::swap(a, b);
    auto it = edge_id.find({a, b});
    if (it == edge_id.end())
      throw MeshError("facet " + std::to_string(fi) + " is not an edge of any cell");
    facet_edge[fi] = it->second;
    if (edge_facet[it->second] >= 0)
      throw MeshError("edge of facet " + std::to_string(fi) + " is tagged twice");
    edge_facet[it->second] = fi;
  }

  validate();
}

void Mesh::validate() const {
  for (int c = 0; c < n_cells(); ++c) {
    for (int i = 0; i < 3; ++i)
      if (cells[c][i] < 0 || cells[c][i] >= n_vertices())
        throw MeshError("cell " + std::to_string(c) + " has an out-of-range vertex index");
    if (cell_area(c) <= 0.0)
      throw MeshError("negative cell area in cell " + std::to_string(c));
  }
  if (cell_subdomain.size() != cells.size())
    throw MeshError("cell subdomain tags missing");

  // Interface edges derived from subdomain adjacency must carry GammaI, and
  // every boundary edge must carry exactly one non-interface tag.
  for (int e = 0; e < n_edges(); ++e) {
    const auto& ec = edge_cells[e];
    const int f = edge_facet[e];
    if (ec[1] >= 0) {
      const bool mixed = cell_subdomain[ec[0]] != cell_subdomain[ec[1]];
      if (mixed) {
        if (f < 0 || facets[f].tag != FacetTag::GammaI)
          throw MeshError("fluid-solid edge (" + std::to_string(edges[e][0]) + "," +
                          std::to_string(edges[e][1]) + ") is not tagged GammaI");
      } else if (f >= 0) {
        throw MeshError("interior edge (" + std::to_string(edges[e][0]) + "," +
                        std::to_string(edges[e][1]) + ") carries a facet tag");
      }
    } else {
      if (f < 0)
        throw MeshError("boundary edge (" + std::to_string(edges[e][0]) + "," +
                        std::to_string(edges[e][1]) + ") is untagged");
      if (facets[f].tag == FacetTag::GammaI)
        throw MeshError("boundary edge (" + std::to_string(edges[e][0]) + "," +
                        std::to_string(edges[e][1]) + ") is tagged GammaI");
    }
  }
}

namespace {

std::string line_error(const std::string& path, int line, const std::string& what) {
  return path + ":" + std::to_string(line) + ": " + what;
}

}  // namespace

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file '" + path + "'");

  Mesh mesh;
  int lineno = 0;
  std::string line;
  auto next_line = [&](std::istringstream& iss) {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      iss.clear();
      iss.str(line);
      return true;
    }
    return false;
  };

  std::istringstream iss;
  std::string kw;
  int n = 0;

  if (!next_line(iss) || !(iss >> kw >> n) || kw != "vertices")
    throw MeshError(line_error(path, lineno, "expected 'vertices N'"));
  mesh.vertices.resize(n);
  for (int i = 0; i < n; ++i) {
    if (!next_line(iss) || !(iss >> mesh.vertices[i].x >> mesh.vertices[i].y))
      throw MeshError(line_error(path, lineno, "expected vertex 'x y'"));
  }

  std::string sub;
  if (!next_line(iss) || !(iss >> kw >> n >> sub) || kw != "cells" || sub != "sub")
    throw MeshError(line_error(path, lineno, "expected 'cells M sub'"));
  mesh.cells.resize(n);
  mesh.cell_subdomain.resize(n);
  for (int i = 0; i < n; ++i) {
    int a, b, c, t;
    if (!next_line(iss) || !(iss >> a >> b >> c >> t) || (t != 0 && t != 1))
      throw MeshError(line_error(path, lineno, "expected cell 'i j k t' with t in {0,1}"));
    mesh.cells[i] = {a, b, c};
    mesh.cell_subdomain[i] = static_cast<Subdomain>(t);
  }

  if (!next_line(iss) || !(iss >> kw >> n) || kw != "facets")
    throw MeshError(line_error(path, lineno, "expected 'facets K'"));
  mesh.facets.resize(n);
  for (int i = 0; i < n; ++i) {
    int a, b;
    std::string tag;
    if (!next_line(iss) || !(iss >> a >> b >> tag))
      throw MeshError(line_error(path, lineno, "expected facet 'i j TAG'"));
    try {
      mesh.facets[i] = {a, b, facet_tag_from_string(tag)};
    } catch (const MeshError& e) {
      throw MeshError(line_error(path, lineno, e.what()));
    }
  }

  mesh.finalize();
  return mesh;
}

void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file '" + path + "'");
  out.precision(17);
  out << "vertices " << mesh.n_vertices() << "\n";
  for (const auto& v : mesh.vertices) out << v.x << " " << v.y << "\n";
  out << "cells " << mesh.n_cells() << " sub\n";
  for (int c = 0; c < mesh.n_cells(); ++c)
    out << mesh.cells[c][0] << " " << mesh.cells[c][1] << " " << mesh.cells[c][2] << " "
        << static_cast<int>(mesh.cell_subdomain[c]) << "\n";
  out << "facets " << mesh.facets.size() << "\n";
  for (const auto& f : mesh.facets)
    out << f.v0 << " " << f.v1 << " " << to_string(f.tag) << "\n";
}

double CurveMesh::segment_length(int s) const {
  const auto [a, b] = segment_vertices(s);
  return norm(parent->vertices[chain_vertices[b]] - parent->vertices[chain_vertices[a]]);
}

std::array<int, 2> CurveMesh::segment_vertices(int s) const {
  return {s, (s + 1) % static_cast<int>(chain_vertices.size())};
}

double CurveMesh::total_length() const {
  double s = 0.0;
  for (int i = 0; i < n_segments(); ++i) s += segment_length(i);
  return s;
}

CurveMesh extract_curve(const Mesh& mesh, FacetTag tag) {
  std::vector<int> tagged;
  for (int fi = 0; fi < static_cast<int>(mesh.facets.size()); ++fi)
    if (mesh.facets[fi].tag == tag) tagged.push_back(fi);
  if (tagged.empty()) throw MeshError(std::string("tag ") + to_string(tag) + " absent from mesh");

  // vertex -> incident tagged facets
  std::map<int, std::vector<int>> incident;
  for (int fi : tagged) {
    incident[mesh.facets[fi].v0].push_back(fi);
    incident[mesh.facets[fi].v1].push_back(fi);
  }
  int start_vertex = -1;
  for (const auto& [v, fs] : incident) {
    if (fs.size() > 2)
      throw MeshError(std::string("tagged edges of ") + to_string(tag) +
                      " do not form a chain (vertex " + std::to_string(v) +
                      " has " + std::to_string(fs.size()) + " incident edges)");
    if (fs.size() == 1 && start_vertex < 0) start_vertex = v;
  }
  const bool closed = start_vertex < 0;
  if (closed) start_vertex = incident.begin()->first;

  CurveMesh curve;
  curve.parent = &mesh;
  curve.tag = tag;
  curve.closed = closed;

  std::vector<bool> used(mesh.facets.size(), false);
  int v = start_vertex;
  curve.chain_vertices.push_back(v);
  for (;;) {
    int next_facet = -1;
    for (int fi : incident[v])
      if (!used[fi]) next_facet = fi;
    if (next_facet < 0) break;
    used[next_facet] = true;
    curve.curve_edges.push_back(next_facet);
    v = mesh.facets[next_facet].v0 == v ? mesh.facets[next_facet].v1 : mesh.facets[next_facet].v0;
    if (closed && v == start_vertex) break;
    curve.chain_vertices.push_back(v);
  }
  if (curve.curve_edges.size() != tagged.size())
    throw MeshError(std::string("tagged edges of ") + to_string(tag) +
                    " do not form a single connected chain");

  curve.arclength.resize(curve.n_vertices());
  curve.arclength[0] = 0.0;
  for (int i = 1; i < curve.n_vertices(); ++i)
    curve.arclength[i] =
        curve.arclength[i - 1] +
        norm(mesh.vertices[curve.chain_vertices[i]] - mesh.vertices[curve.chain_vertices[i - 1]]);

  // Vertex normals: mean of adjacent facet normals, renormalized; endpoints
  // use the single adjacent facet normal.
  curve.vertex_normal.assign(curve.n_vertices(), Vec2d{0, 0});
  for (int s = 0; s < curve.n_segments(); ++s) {
    const Vec2d n = mesh.facet_normal(curve.curve_edges[s]);
    const auto [a, b] = curve.segment_vertices(s);
    curve.vertex_normal[a] += n;
    curve.vertex_normal[b] += n;
  }
  for (auto& n : curve.vertex_normal) {
    const double len = norm(n);
    if (len < 1e-14) throw MeshError("degenerate vertex normal on curve");
    n = Vec2d{n.x / len, n.y / len};
  }
  return curve;
}

double min_cell_det(const Mesh& mesh, std::span<const double> u) {
  double mind = std::numeric_limits<double>::max();
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto grads = mesh.barycentric_gradients(c);
    Mat2<double> G = Mat2<double>::identity();
    for (int i = 0; i < 3; ++i) {
      const int v = mesh.cells[c][i];
      G(0, 0) += u[2 * v] * grads[i].x;
      G(0, 1) += u[2 * v] * grads[i].y;
      G(1, 0) += u[2 * v + 1] * grads[i].x;
      G(1, 1) += u[2 * v + 1] * grads[i].y;
    }
    mind = std::min(mind, det(G));
  }
  return mind;
}

}  // namespace fsikit
