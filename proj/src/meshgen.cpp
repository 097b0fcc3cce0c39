#include "fsikit/meshgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fsikit {

namespace {

void tag_boundary_rect(Mesh& mesh, Vec2d lo, Vec2d hi) {
  std::map<std::pair<int, int>, std::array<int, 2>> edge_cells;
  for (int c = 0; c < mesh.n_cells(); ++c)
    for (int i = 0; i < 3; ++i) {
      int a = mesh.cells[c][(i + 1) % 3], b = mesh.cells[c][(i + 2) % 3];
      if (a > b) std::swap(a, b);
      auto [it, fresh] = edge_cells.try_emplace({a, b}, std::array<int, 2>{-1, -1});
      (it->second[0] < 0 ? it->second[0] : it->second[1]) = c;
    }
  const double tol = 1e-9 * (norm(hi - lo) + 1.0);
  for (const auto& [e, cs] : edge_cells) {
    const Vec2d p = mesh.vertices[e.first], q = mesh.vertices[e.second];
    if (cs[1] < 0) {
      FacetTag tag;
      if (std::abs(p.x - lo.x) < tol && std::abs(q.x - lo.x) < tol)
        tag = FacetTag::GammaFDi;
      else if (std::abs(p.x - hi.x) < tol && std::abs(q.x - hi.x) < tol)
        tag = FacetTag::GammaFN;
      else
        tag = FacetTag::GammaFD0;
      mesh.facets.push_back({e.first, e.second, tag});
    } else if (mesh.cell_subdomain[cs[0]] != mesh.cell_subdomain[cs[1]]) {
      mesh.facets.push_back({e.first, e.second, FacetTag::GammaI});
    }
  }
}

}  // namespace

Mesh rect_mesh(int nx, int ny, Vec2d lo, Vec2d hi, double solid_x_from) {
  Mesh mesh;
  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      mesh.vertices.push_back({lo.x + (hi.x - lo.x) * i / nx, lo.y + (hi.y - lo.y) * j / ny});
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      if ((i + j) % 2 == 0) {
        mesh.cells.push_back({a, b, c});
        mesh.cells.push_back({a, c, d});
      } else {
        mesh.cells.push_back({a, b, d});
        mesh.cells.push_back({b, c, d});
      }
    }
  mesh.cell_subdomain.resize(mesh.cells.size());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto& t = mesh.cells[c];
    const double cx = (mesh.vertices[t[0]].x + mesh.vertices[t[1]].x + mesh.vertices[t[2]].x) / 3.0;
    mesh.cell_subdomain[c] = cx >= solid_x_from ? Subdomain::Solid : Subdomain::Fluid;
  }
  tag_boundary_rect(mesh, lo, hi);
  mesh.finalize();
  return mesh;
}

Mesh disk_mesh(int n_boundary, double radius, Vec2d center, double wobble) {
  Mesh mesh;
  mesh.vertices.push_back(center);
  for (int i = 0; i < n_boundary; ++i) {
    const double a =
        2.0 * M_PI * (i + wobble * std::sin(2.0 * M_PI * i / n_boundary)) / n_boundary;
    mesh.vertices.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  for (int i = 0; i < n_boundary; ++i) {
    const int a = 1 + i, b = 1 + (i + 1) % n_boundary;
    mesh.cells.push_back({0, a, b});
    mesh.facets.push_back({a, b, FacetTag::GammaFDc});
  }
  mesh.cell_subdomain.assign(mesh.cells.size(), Subdomain::Fluid);
  mesh.finalize();
  return mesh;
}

namespace {

/// Partition [a,b] with steps starting at h0 and growing geometrically up to
/// h1, rescaled so the last point lands exactly on b.
std::vector<double> graded_fill(double a, double b, double h0, double h1, double grow = 1.25) {
  const double span = std::abs(b - a);
  std::vector<double> steps;
  double h = h0, covered = 0.0;
  while (covered < span) {
    steps.push_back(h);
    covered += h;
    h = std::min(h * grow, h1);
  }
  const double scale = span / covered;
  std::vector<double> pts;
  double s = 0.0;
  const double dir = b > a ? 1.0 : -1.0;
  for (size_t i = 0; i + 1 < steps.size(); ++i) {
    s += steps[i] * scale;
    pts.push_back(a + dir * s);
  }
  pts.push_back(b);
  return pts;
}

std::vector<double> uniform_fill(double a, double b, double h) {
  const int n = std::max(1, static_cast<int>(std::round((b - a) / h)));
  std::vector<double> pts;
  for (int i = 1; i <= n; ++i) pts.push_back(a + (b - a) * i / n);
  return pts;
}

}  // namespace

Mesh channel_mesh(const ChannelSpec& spec) {
  const Vec2d c = spec.center;
  const double r = spec.radius;

  // Grid lines: fine around the obstacle, flap-conforming band in y,
  // graded towards the far field. The flap band edges and tip are grid lines.
  const double x_fine0 = c.x - r - 2.0 * spec.h_near;
  const double x_fine1 = c.x + r + 2.0 * spec.h_near;
  std::vector<double> xs;
  {
    auto left = graded_fill(x_fine0, 0.0, spec.h_near, spec.h_far);
    xs.insert(xs.end(), left.rbegin(), left.rend());
    xs.push_back(x_fine0);
    for (double x : uniform_fill(x_fine0, x_fine1, spec.h_near)) xs.push_back(x);
    if (spec.with_flap) {
      for (double x : uniform_fill(x_fine1, spec.flap_tip_x, spec.h_flap)) xs.push_back(x);
      for (double x : graded_fill(spec.flap_tip_x, spec.length, spec.h_flap, spec.h_far))
        xs.push_back(x);
    } else {
      for (double x : graded_fill(x_fine1, spec.length, spec.h_near, spec.h_far)) xs.push_back(x);
    }
  }
  std::vector<double> ys;
  {
    const double y_fine0 = c.y - r - 2.0 * spec.h_near;
    const double y_fine1 = c.y + r + 2.0 * spec.h_near;
    auto below = graded_fill(y_fine0, 0.0, spec.h_near, spec.h_far);
    ys.insert(ys.end(), below.rbegin(), below.rend());
    ys.push_back(y_fine0);
    if (spec.with_flap) {
      // flap-conforming band at the flap half-width, h_near elsewhere around
      // the circle
      const double yb0 = c.y - 2.0 * spec.flap_half;
      const double yb1 = c.y + 2.0 * spec.flap_half;
      for (double y : uniform_fill(y_fine0, yb0, spec.h_near)) ys.push_back(y);
      for (double y : uniform_fill(yb0, yb1, spec.flap_half)) ys.push_back(y);
      for (double y : uniform_fill(yb1, y_fine1, spec.h_near)) ys.push_back(y);
    } else {
      for (double y : uniform_fill(y_fine0, y_fine1, spec.h_near)) ys.push_back(y);
    }
    for (double y : graded_fill(y_fine1, spec.height, spec.h_near, spec.h_far)) ys.push_back(y);
  }

  const int nx = static_cast<int>(xs.size()), ny = static_cast<int>(ys.size());
  std::vector<Vec2d> pts(static_cast<size_t>(nx) * ny);
  auto vid = [&](int i, int j) { return j * nx + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) pts[vid(i, j)] = {xs[i], ys[j]};

  // Snap grid points close to the circle onto it, then carve the hole.
  const double domain_tol = 1e-9 * spec.length;
  auto dist_c = [&](const Vec2d& p) { return norm(p - c); };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      Vec2d& p = pts[vid(i, j)];
      if (p.x < domain_tol || p.x > spec.length - domain_tol || p.y < domain_tol ||
          p.y > spec.height - domain_tol)
        continue;
      double hloc = spec.length;
      if (i > 0) hloc = std::min(hloc, xs[i] - xs[i - 1]);
      if (i + 1 < nx) hloc = std::min(hloc, xs[i + 1] - xs[i]);
      if (j > 0) hloc = std::min(hloc, ys[j] - ys[j - 1]);
      if (j + 1 < ny) hloc = std::min(hloc, ys[j + 1] - ys[j]);
      const double d = dist_c(p);
      if (std::abs(d - r) < 0.45 * hloc && d > 1e-12) {
        const double dy = p.y - c.y;
        if (spec.with_flap && std::abs(std::abs(dy) - spec.flap_half) < domain_tol) {
          // keep the flap boundary lines straight: project along the line so
          // the attachment junction lies exactly on circle and line
          const double dx = std::sqrt(r * r - dy * dy);
          p.x = p.x >= c.x ? c.x + dx : c.x - dx;
        } else {
          const double s = r / d;
          p = {c.x + (p.x - c.x) * s, c.y + (p.y - c.y) * s};
        }
      }
    }

  std::vector<std::array<int, 3>> tris;
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = vid(i, j), b = vid(i + 1, j), d = vid(i + 1, j + 1), e = vid(i, j + 1);
      if ((i + j) % 2 == 0) {
        tris.push_back({a, b, d});
        tris.push_back({a, d, e});
      } else {
        tris.push_back({a, b, e});
        tris.push_back({b, d, e});
      }
    }

  std::vector<std::array<int, 3>> kept;
  std::vector<Subdomain> sub;
  auto in_flap_rect = [&](const Vec2d& p) {
    return spec.with_flap && p.x > c.x && p.x < spec.flap_tip_x &&
           std::abs(p.y - c.y) < spec.flap_half;
  };
  for (const auto& t : tris) {
    const Vec2d g = (1.0 / 3.0) * (pts[t[0]] + pts[t[1]] + pts[t[2]]);
    if (dist_c(g) < r) continue;  // hole
    kept.push_back(t);
    sub.push_back(in_flap_rect(g) ? Subdomain::Solid : Subdomain::Fluid);
  }

  std::vector<bool> used(pts.size(), false);
  for (const auto& t : kept)
    for (int v : t) used[v] = true;

  Mesh mesh;
  std::vector<int> remap(pts.size(), -1);
  for (size_t v = 0; v < pts.size(); ++v)
    if (used[v]) {
      remap[v] = mesh.n_vertices();
      mesh.vertices.push_back(pts[v]);
    }
  for (size_t k = 0; k < kept.size(); ++k) {
    mesh.cells.push_back({remap[kept[k][0]], remap[kept[k][1]], remap[kept[k][2]]});
    mesh.cell_subdomain.push_back(sub[k]);
  }

  // Facets: rectangle sides by position, circle arc split by the adjacent
  // subdomain, interface from adjacency.
  std::map<std::pair<int, int>, std::array<int, 2>> edge_cells;
  for (int cc = 0; cc < mesh.n_cells(); ++cc)
    for (int i = 0; i < 3; ++i) {
      int a = mesh.cells[cc][(i + 1) % 3], b = mesh.cells[cc][(i + 2) % 3];
      if (a > b) std::swap(a, b);
      auto [it, fresh] = edge_cells.try_emplace({a, b}, std::array<int, 2>{-1, -1});
      (it->second[0] < 0 ? it->second[0] : it->second[1]) = cc;
    }
  for (const auto& [e, cs] : edge_cells) {
    const Vec2d p = mesh.vertices[e.first], q = mesh.vertices[e.second];
    if (cs[1] < 0) {
      FacetTag tag;
      if (std::abs(p.x) < domain_tol && std::abs(q.x) < domain_tol)
        tag = FacetTag::GammaFDi;
      else if (std::abs(p.x - spec.length) < domain_tol && std::abs(q.x - spec.length) < domain_tol)
        tag = FacetTag::GammaFN;
      else if ((std::abs(p.y) < domain_tol && std::abs(q.y) < domain_tol) ||
               (std::abs(p.y - spec.height) < domain_tol && std::abs(q.y - spec.height) < domain_tol))
        tag = FacetTag::GammaFD0;
      else  // remaining boundary edges form the rim of the carved obstacle
        tag = mesh.cell_subdomain[cs[0]] == Subdomain::Solid ? FacetTag::GammaSDc
                                                             : FacetTag::GammaFDc;
      mesh.facets.push_back({e.first, e.second, tag});
    } else if (mesh.cell_subdomain[cs[0]] != mesh.cell_subdomain[cs[1]]) {
      mesh.facets.push_back({e.first, e.second, FacetTag::GammaI});
    }
  }

  // Umbrella smoothing of untagged interior fluid vertices: repairs the
  // slivers the circle snapping leaves behind.
  {
    std::vector<char> movable(mesh.n_vertices(), 1);
    for (const auto& f : mesh.facets) movable[f.v0] = movable[f.v1] = 0;
    for (int cc = 0; cc < mesh.n_cells(); ++cc)
      if (mesh.cell_subdomain[cc] == Subdomain::Solid)
        for (int v : mesh.cells[cc]) movable[v] = 0;
    std::vector<std::vector<int>> nbrs(mesh.n_vertices());
    for (int cc = 0; cc < mesh.n_cells(); ++cc)
      for (int i = 0; i < 3; ++i) {
        const int u = mesh.cells[cc][i], v = mesh.cells[cc][(i + 1) % 3];
        nbrs[u].push_back(v);
        nbrs[v].push_back(u);
      }
    for (auto& list : nbrs) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<Vec2d> next = mesh.vertices;
      for (int v = 0; v < mesh.n_vertices(); ++v) {
        if (!movable[v] || nbrs[v].empty()) continue;
        Vec2d s{0, 0};
        for (int u : nbrs[v]) s += mesh.vertices[u];
        next[v] = (1.0 / static_cast<double>(nbrs[v].size())) * s;
      }
      mesh.vertices = next;
    }
  }

  mesh.finalize();
  return mesh;
}

}  // namespace fsikit
