#pragma once

#include <limits>

#include "fsikit/mesh.hpp"

namespace fsikit {

/// Structured rectangle mesh on [lo,hi], nx-by-ny quads split into triangles.
/// Cells with centroid x >= solid_x_from are tagged Solid (mixed meshes for
/// the stationary-interface problems). Sides are tagged GammaFDi (left),
/// GammaFN (right), GammaFD0 (bottom/top); fluid-solid edges become GammaI.
Mesh rect_mesh(int nx, int ny, Vec2d lo = {0, 0}, Vec2d hi = {1, 1},
               double solid_x_from = std::numeric_limits<double>::infinity());

/// Fan-triangulated disk with n boundary vertices; the full boundary polygon
/// carries GammaFDc (a closed curve). A nonzero wobble perturbs the boundary
/// angles (test meshes with a genuinely irregular polygon).
Mesh disk_mesh(int n_boundary, double radius = 1.0, Vec2d center = {0, 0},
               double wobble = 0.0);

/// Channel with a circular obstacle and, optionally, an elastic flap attached
/// to its downstream side. Derived from the standard flow-around-cylinder
/// benchmark geometry: channel length x height, circle of given radius, flap
/// band [center.x, flap_tip_x] x [center.y - flap_half, center.y + flap_half]
/// minus the circle.
struct ChannelSpec {
  double length = 2.5;
  double height = 0.41;
  Vec2d center{0.2, 0.2};
  double radius = 0.05;
  bool with_flap = true;
  double flap_tip_x = 0.6;
  double flap_half = 0.01;
  double h_near = 0.0125;  // cell size near the obstacle
  double h_flap = 0.025;   // streamwise cell size along the flap band
  double h_far = 0.14;     // cell size far from the obstacle
};

Mesh channel_mesh(const ChannelSpec& spec);

}  // namespace fsikit
