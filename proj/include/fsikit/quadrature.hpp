#pragma once

#include <span>
#include <vector>

#include "fsikit/la.hpp"

namespace fsikit {

struct TriQuadPoint {
  double xi, eta, w;  // reference triangle (0,0)-(1,0)-(0,1), weights sum to 1/2
};

/// Symmetric triangle rule exact for polynomials of the given degree
/// (supported: 1, 2, 4, 6).
std::span<const TriQuadPoint> tri_quadrature(int degree);

struct SegQuadPoint {
  double t, w;  // reference segment [0,1], weights sum to 1
};

/// Gauss-Legendre rule on [0,1] with the given point count (1..4).
std::span<const SegQuadPoint> seg_quadrature(int points);

}  // namespace fsikit
