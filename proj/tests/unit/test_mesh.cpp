#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "fsikit/mesh.hpp"
#include "fsikit/meshgen.hpp"

using namespace fsikit;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

}  // namespace

TEST_CASE("unit square mesh file: two cells of area 0.5") {
  write_file("unit_square.msh",
             "vertices 4\n0 0\n1 0\n1 1\n0 1\n"
             "cells 2 sub\n0 1 2 0\n0 2 3 0\n"
             "facets 4\n0 1 GammaFD0\n1 2 GammaFN\n2 3 GammaFD0\n3 0 GammaFDi\n");
  const Mesh mesh = load_mesh("unit_square.msh");
  REQUIRE(mesh.n_cells() == 2);
  CHECK(mesh.cell_area(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(mesh.cell_area(1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(mesh.total_area() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("clockwise cell is rejected with a negative-area error") {
  write_file("bad_orientation.msh",
             "vertices 3\n0 0\n1 0\n0 1\n"
             "cells 1 sub\n0 2 1 0\n"
             "facets 3\n0 1 GammaFD0\n1 2 GammaFD0\n2 0 GammaFD0\n");
  CHECK_THROWS_WITH_AS(load_mesh("bad_orientation.msh"),
                       doctest::Contains("negative cell area"), MeshError);
}

TEST_CASE("parse errors carry line numbers") {
  write_file("bad_parse.msh", "vertices 2\n0 0\nnot-a-number 1\n");
  try {
    load_mesh("bad_parse.msh");
    FAIL("expected parse error");
  } catch (const MeshError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("missing interface tag is a validation error") {
  // two cells, left fluid right solid, shared edge untagged
  write_file("bad_interface.msh",
             "vertices 4\n0 0\n1 0\n1 1\n0 1\n"
             "cells 2 sub\n0 1 2 0\n0 2 3 1\n"
             "facets 4\n0 1 GammaFD0\n1 2 GammaFN\n2 3 GammaFD0\n3 0 GammaFDi\n");
  CHECK_THROWS_WITH_AS(load_mesh("bad_interface.msh"), doctest::Contains("GammaI"), MeshError);
}

TEST_CASE("signed cell areas sum to the boundary polygon area") {
  const Mesh mesh = rect_mesh(5, 3, {0, 0}, {2.0, 0.7});
  // shoelace over the boundary polygon equals the cell-area sum
  CHECK(mesh.total_area() == doctest::Approx(2.0 * 0.7).epsilon(1e-12));

  const Mesh disk = disk_mesh(64);
  double shoelace = 0.0;
  for (const auto& f : disk.facets) {
    const Vec2d a = disk.vertices[f.v0], b = disk.vertices[f.v1];
    shoelace += 0.5 * cross(a, b);
  }
  CHECK(disk.total_area() == doctest::Approx(std::abs(shoelace)).epsilon(1e-12));
}

TEST_CASE("mesh save/load round trip") {
  const Mesh mesh = rect_mesh(3, 2);
  save_mesh(mesh, "roundtrip.msh");
  const Mesh again = load_mesh("roundtrip.msh");
  REQUIRE(again.n_vertices() == mesh.n_vertices());
  REQUIRE(again.n_cells() == mesh.n_cells());
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    CHECK(again.vertices[v].x == mesh.vertices[v].x);
    CHECK(again.vertices[v].y == mesh.vertices[v].y);
  }
}

TEST_CASE("fsi2 geometry: tags partition boundary plus interface") {
  ChannelSpec spec;
  const Mesh mesh = channel_mesh(spec);  // finalize() validates the partition
  CHECK(mesh.has_tag(FacetTag::GammaFDi));
  CHECK(mesh.has_tag(FacetTag::GammaFD0));
  CHECK(mesh.has_tag(FacetTag::GammaFN));
  CHECK(mesh.has_tag(FacetTag::GammaFDc));
  CHECK(mesh.has_tag(FacetTag::GammaSDc));
  CHECK(mesh.has_tag(FacetTag::GammaI));
  int n_solid = 0;
  for (auto s : mesh.cell_subdomain)
    if (s == Subdomain::Solid) ++n_solid;
  CHECK(n_solid > 0);
  // channel area minus the circular hole, up to the polygonal circle
  CHECK(mesh.total_area() ==
        doctest::Approx(2.5 * 0.41 - M_PI * 0.05 * 0.05).epsilon(2e-2));
}

TEST_CASE("extract_curve: design boundary of the fsi2 mesh is an open chain") {
  ChannelSpec spec;
  const Mesh mesh = channel_mesh(spec);
  const CurveMesh curve = extract_curve(mesh, FacetTag::GammaFDc);
  CHECK(curve.n_endpoints() == 2);
  // endpoints sit at the flap attachment: on a flap boundary line, at the rim
  // of the carved circle
  for (int idx : {0, curve.n_vertices() - 1}) {
    const Vec2d p = mesh.vertices[curve.chain_vertices[idx]];
    CHECK(std::abs(std::abs(p.y - spec.center.y) - spec.flap_half) < 1e-9);
    CHECK(std::abs(norm(p - spec.center) - spec.radius) < spec.h_near);
  }
  // chain covers every tagged edge exactly once
  int tagged = 0;
  for (const auto& f : mesh.facets)
    if (f.tag == FacetTag::GammaFDc) ++tagged;
  CHECK(curve.n_segments() == tagged);
}

TEST_CASE("extract_curve: disk boundary is closed") {
  const Mesh disk = disk_mesh(32);
  const CurveMesh curve = extract_curve(disk, FacetTag::GammaFDc);
  CHECK(curve.closed);
  CHECK(curve.n_endpoints() == 0);
  CHECK(curve.n_segments() == 32);
  CHECK(curve.n_vertices() == 32);
}

TEST_CASE("extract_curve: absent tag") {
  const Mesh disk = disk_mesh(16);
  CHECK_THROWS_AS(extract_curve(disk, FacetTag::GammaI), MeshError);
}

TEST_CASE("unit circle polygon normals converge to radial directions") {
  // wobbled boundary angles so the averaged normals are not radial by symmetry
  auto max_normal_error = [](int n) {
    const Mesh disk = disk_mesh(n, 1.0, {0, 0}, 0.3);
    const CurveMesh curve = extract_curve(disk, FacetTag::GammaFDc);
    double err = 0.0;
    for (int i = 0; i < curve.n_vertices(); ++i) {
      const Vec2d p = disk.vertices[curve.chain_vertices[i]];
      err = std::max(err, norm(curve.vertex_normal[i] - p));
      CHECK(norm(curve.vertex_normal[i]) == doctest::Approx(1.0).epsilon(1e-12));
    }
    return err;
  };
  const double e64 = max_normal_error(64);
  CHECK(e64 < 10.0 / (64.0 * 64.0));
  // O(1/n^2): about a quarter of the error when doubling n
  const double e128 = max_normal_error(128);
  CHECK(e128 < 10.0 / (128.0 * 128.0));
  CHECK(e64 / e128 > 2.5);
}

TEST_CASE("min_cell_det: identity, shear and a random-displacement oracle") {
  const Mesh mesh = rect_mesh(4, 4);
  std::vector<double> u(2 * mesh.n_vertices(), 0.0);
  CHECK(min_cell_det(mesh, u) == doctest::Approx(1.0).epsilon(1e-14));

  // affine shear (x,y) -> (x + 0.5 y, y) has unit determinant
  for (int v = 0; v < mesh.n_vertices(); ++v) u[2 * v] = 0.5 * mesh.vertices[v].y;
  CHECK(min_cell_det(mesh, u) == doctest::Approx(1.0).epsilon(1e-13));

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-0.02, 0.02);
  for (auto& x : u) x = dist(rng);
  // brute-force per-cell determinant from the deformed vertex positions
  double oracle = 1e300;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto& t = mesh.cells[c];
    Vec2d p[3], q[3];
    for (int i = 0; i < 3; ++i) {
      p[i] = mesh.vertices[t[i]];
      q[i] = {p[i].x + u[2 * t[i]], p[i].y + u[2 * t[i] + 1]};
    }
    const double a_ref = cross(p[1] - p[0], p[2] - p[0]);
    const double a_def = cross(q[1] - q[0], q[2] - q[0]);
    oracle = std::min(oracle, a_def / a_ref);
  }
  CHECK(min_cell_det(mesh, u) == doctest::Approx(oracle).epsilon(1e-12));
}
