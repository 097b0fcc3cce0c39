#include "fsikit/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace fsikit {

namespace {

const TriQuadPoint kDeg1[] = {{1.0 / 3.0, 1.0 / 3.0, 0.5}};

const TriQuadPoint kDeg2[] = {
    {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0},
    {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
    {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
};

// Dunavant degree-4, 6 points.
constexpr double a1 = 0.445948490915965, w1 = 0.223381589678011 / 2.0;
constexpr double a2 = 0.091576213509771, w2 = 0.109951743655322 / 2.0;
const TriQuadPoint kDeg4[] = {
    {a1, a1, w1},           {1.0 - 2.0 * a1, a1, w1}, {a1, 1.0 - 2.0 * a1, w1},
    {a2, a2, w2},           {1.0 - 2.0 * a2, a2, w2}, {a2, 1.0 - 2.0 * a2, w2},
};

// Dunavant degree-6, 12 points.
constexpr double b1 = 0.063089014491502, v1 = 0.050844906370207 / 2.0;
constexpr double b2 = 0.249286745170910, v2 = 0.116786275726379 / 2.0;
constexpr double b3 = 0.310352451033785, b4 = 0.053145049844816,
                 v3 = 0.082851075618374 / 2.0;
const TriQuadPoint kDeg6[] = {
    {b1, b1, v1},
    {1.0 - 2.0 * b1, b1, v1},
    {b1, 1.0 - 2.0 * b1, v1},
    {b2, b2, v2},
    {1.0 - 2.0 * b2, b2, v2},
    {b2, 1.0 - 2.0 * b2, v2},
    {b3, b4, v3},
    {b4, b3, v3},
    {1.0 - b3 - b4, b3, v3},
    {1.0 - b3 - b4, b4, v3},
    {b3, 1.0 - b3 - b4, v3},
    {b4, 1.0 - b3 - b4, v3},
};

const SegQuadPoint kSeg1[] = {{0.5, 1.0}};
const double g2 = 0.5 / std::sqrt(3.0);
const SegQuadPoint kSeg2[] = {{0.5 - g2, 0.5}, {0.5 + g2, 0.5}};
const double g3 = 0.5 * std::sqrt(0.6);
const SegQuadPoint kSeg3[] = {{0.5 - g3, 5.0 / 18.0}, {0.5, 8.0 / 18.0}, {0.5 + g3, 5.0 / 18.0}};
const double c4a = 0.5 * std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
const double c4b = 0.5 * std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
const double w4a = (18.0 + std::sqrt(30.0)) / 72.0;
const double w4b = (18.0 - std::sqrt(30.0)) / 72.0;
const SegQuadPoint kSeg4[] = {
    {0.5 - c4b, w4b}, {0.5 - c4a, w4a}, {0.5 + c4a, w4a}, {0.5 + c4b, w4b}};

}  // namespace

std::span<const TriQuadPoint> tri_quadrature(int degree) {
  switch (degree) {
    case 1:
      return kDeg1;
    case 2:
      return kDeg2;
    case 3:
    case 4:
      return kDeg4;
    case 5:
    case 6:
      return kDeg6;
    default:
      throw std::invalid_argument("unsupported triangle quadrature degree");
  }
}

std::span<const SegQuadPoint> seg_quadrature(int points) {
  switch (points) {
    case 1:
      return kSeg1;
    case 2:
      return kSeg2;
    case 3:
      return kSeg3;
    case 4:
      return kSeg4;
    default:
      throw std::invalid_argument("unsupported segment quadrature");
  }
}

}  // namespace fsikit
