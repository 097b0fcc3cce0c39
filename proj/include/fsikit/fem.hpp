#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fsikit/mesh.hpp"
#include "fsikit/quadrature.hpp"
#include "fsikit/sparse.hpp"

namespace fsikit {

enum class Family { P1, P2 };

/// Continuous Lagrange space on the mesh volume or on a boundary curve.
/// Scalar nodes are vertices (P1) or vertices + edge midpoints (P2);
/// vector dofs are interleaved per node.
class Space {
 public:
  static Space volume(const Mesh& mesh, Family family, int components);
  static Space curve(const CurveMesh& curve, Family family, int components);

  const Mesh& mesh() const { return *mesh_; }
  const CurveMesh* curve_mesh() const { return curve_; }
  bool is_curve() const { return curve_ != nullptr; }
  Family family() const { return family_; }
  int components() const { return components_; }
  int n_nodes() const { return n_nodes_; }
  int n_dofs() const { return n_nodes_ * components_; }
  int nodes_per_cell() const { return family_ == Family::P1 ? 3 : 6; }
  int nodes_per_segment() const { return family_ == Family::P1 ? 2 : 3; }

  int dof(int node, int comp) const { return node * components_ + comp; }
  /// Scalar node ids of a volume cell: vertices then edge nodes.
  void cell_nodes(int cell, int out[6]) const;
  /// Scalar node ids of a curve segment: endpoints then midpoint node.
  void segment_nodes(int segment, int out[3]) const;
  Vec2d node_point(int node) const;

 private:
  const Mesh* mesh_ = nullptr;
  const CurveMesh* curve_ = nullptr;
  Family family_ = Family::P1;
  int components_ = 1;
  int n_nodes_ = 0;
};

/// build_space with curve support extracts and owns the curve.
struct CurveSpace {
  std::shared_ptr<const CurveMesh> curve;
  Space space;
};
Space build_space(const Mesh& mesh, Family family, int components);
CurveSpace build_space(const Mesh& mesh, Family family, int components, FacetTag curve_tag);

struct FEField {
  const Space* space = nullptr;
  std::vector<double> coeffs;

  FEField() = default;
  explicit FEField(const Space& s) : space(&s), coeffs(s.n_dofs(), 0.0) {}
};

/// Basis values and physical gradients at a single quadrature point.
struct CellBasis {
  int n = 0;
  double phi[6];
  Vec2d grad[6];
  Vec2d point;
  double jac_det = 0.0;  // 2 * cell area
};

CellBasis eval_cell_basis(const Space& space, int cell, double xi, double eta);

/// 1D basis on a curve segment: values and arclength derivatives.
struct SegmentBasis {
  int n = 0;
  double phi[3];
  double dphi_ds[3];
  Vec2d point;
  double length = 0.0;
};

SegmentBasis eval_segment_basis(const Space& space, int segment, double t);

/// Dirichlet condition: constrained dof set with a (time-dependent) profile.
struct DirichletBC {
  const Space* space = nullptr;
  std::vector<int> dofs;        // sorted, unique
  std::vector<Vec2d> points;    // location of each constrained dof
  std::vector<int> comps;       // component of each constrained dof
  std::function<double(Vec2d, int, double)> profile;  // (point, comp, t)

  std::vector<double> values_at(double t) const;
};

DirichletBC make_dirichlet(const Space& space, std::span<const FacetTag> tags,
                           std::function<double(Vec2d, int, double)> profile = nullptr);

void apply_dirichlet(CsrMatrix& a, std::span<double> b, const DirichletBC& bc, double t);

enum class CellFilter { All, Fluid, Solid };
inline bool cell_matches(const Mesh& mesh, int cell, CellFilter f) {
  return f == CellFilter::All ||
         (f == CellFilter::Fluid) == (mesh.cell_subdomain[cell] == Subdomain::Fluid);
}

enum class FormKind {
  Mass,           // (u, v), componentwise
  Stiffness,      // (Du, Dv), componentwise
  Elasticity,     // (Du + Du^T, Dv), vector spaces
  Divergence,     // (div u, q), row space scalar
  DivDiv,         // (div u, div v), vector spaces
  CurveMass,      // (c u, v) on a curve, optional scalar coefficient c
  CurveStiffness  // (c du/ds, dv/ds) on a curve
};

/// Galerkin matrix of a named integrand. Coefficient fields (when given)
/// supply spatially varying data, e.g. the regularized Laplace-Beltrami
/// weight.
CsrMatrix assemble_form(FormKind kind, const Space& row, const Space& col,
                        std::span<const FEField* const> coeffs = {}, int quad_degree = 4,
                        CellFilter filter = CellFilter::All);

/// Rectangular coupling (phi_i^volume, phi_j^curve) over the curve, used for
/// boundary loads and their transposes. Row space is a volume space, column
/// space lives on the curve; components must match.
CsrMatrix assemble_trace_mass(const Space& volume_space, const Space& curve_space,
                              int quad_degree = 3);

/// Load vector (f, phi_i) for a pointwise source f(point, component).
std::vector<double> assemble_load(const Space& space,
                                  const std::function<double(Vec2d, int)>& f,
                                  int quad_degree = 4, CellFilter filter = CellFilter::All);

/// Nodes of a volume space lying on facets with the given tags.
std::vector<int> nodes_on_tags(const Space& space, std::span<const FacetTag> tags);

}  // namespace fsikit
