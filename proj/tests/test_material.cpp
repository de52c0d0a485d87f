#include "charmode/material.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace charmode;
using namespace charmode::material;
using charmode::mesh::DiagonalRule;

TEST_CASE("resistivity interpolation endpoints and midpoint") {
  const MaterialModel model;
  CHECK(interpolate_resistivity(model, 0.0) == 1e5);
  CHECK(interpolate_resistivity(model, 1.0) == Catch::Approx(0.01).epsilon(1e-14));
  // rho = 2/3 -> exponent 1/2 -> sqrt(Z_air Z_met) = sqrt(1000)
  CHECK(interpolate_resistivity(model, 2.0 / 3.0) ==
        Catch::Approx(std::sqrt(1000.0)).epsilon(1e-13));
  CHECK_THROWS_AS(interpolate_resistivity(model, -0.1), ConfigError);
  CHECK_THROWS_AS(interpolate_resistivity(model, 1.1), ConfigError);
}

TEST_CASE("model bounds are validated") {
  MaterialModel bad;
  bad.z_air = 0.01;
  bad.z_met = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.z_air = 1.0;
  bad.z_met = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("resistivity derivative") {
  const MaterialModel model;
  SECTION("plug-in value at rho = 0") {
    const double want = 1e5 * std::log(1e-7) * 0.5;
    CHECK(resistivity_derivative(model, 0.0) == Catch::Approx(want).epsilon(1e-13));
  }
  SECTION("matches central finite difference") {
    const double h = 1e-6;
    for (double rho : {0.25, 0.5, 0.75}) {
      const double fd = (interpolate_resistivity(model, rho + h) -
                         interpolate_resistivity(model, rho - h)) /
                        (2.0 * h);
      CHECK(resistivity_derivative(model, rho) ==
            Catch::Approx(fd).epsilon(1e-6));
    }
  }
  SECTION("strictly negative on a dense grid") {
    for (int i = 0; i <= 100; ++i) {
      const double rho = i / 100.0;
      CHECK(resistivity_derivative(model, rho) < 0.0);
      if (i > 0)
        CHECK(interpolate_resistivity(model, rho) <
              interpolate_resistivity(model, rho - 0.01));
    }
  }
}

TEST_CASE("material matrix assembly") {
  const auto m = mesh::generate_plate_mesh(0.6, 0.4, 3, 2, DiagonalRule::alternating);
  const auto basis = mesh::build_rwg(m);
  const auto elems = em::assemble_material_elements(m, basis);
  const Mat gram = em::material_gram(elems, basis.size());
  const MaterialModel model;
  const int T = m.triangle_count();

  SECTION("uniform densities give scaled Gram matrices") {
    const Mat r1 = assemble_material_matrix(Vec::Ones(T), elems, model, basis.size());
    CHECK((r1 - model.z_met * gram).cwiseAbs().maxCoeff() <=
          1e-12 * r1.cwiseAbs().maxCoeff());
    const Mat r0 = assemble_material_matrix(Vec::Zero(T), elems, model, basis.size());
    CHECK((r0 - model.z_air * gram).cwiseAbs().maxCoeff() <=
          1e-12 * r0.cwiseAbs().maxCoeff());
  }

  SECTION("PSD quadratic form for random densities and vectors") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec rho(T);
    for (int t = 0; t < T; ++t) rho[t] = u(rng);
    const Mat r = assemble_material_matrix(rho, elems, model, basis.size());
    CHECK((r - r.transpose()).cwiseAbs().maxCoeff() <=
          1e-12 * r.cwiseAbs().maxCoeff());
    for (int trial = 0; trial < 10; ++trial) {
      CVec v(basis.size());
      for (int i = 0; i < basis.size(); ++i) v[i] = cplx(u(rng) - 0.5, u(rng) - 0.5);
      CHECK((v.adjoint() * r * v)(0).real() >= 0.0);
    }
  }

  SECTION("first-order response to a single-triangle perturbation") {
    Vec rho = Vec::Constant(T, 0.5);
    const double drho = 1e-6;
    const int t = 5;
    const Mat base = assemble_material_matrix(rho, elems, model, basis.size());
    rho[t] += drho;
    const Mat bumped = assemble_material_matrix(rho, elems, model, basis.size());
    rho[t] = 0.5;
    const auto d = material_matrix_derivative(rho, elems, m, t, model);
    Mat pred = Mat::Zero(basis.size(), basis.size());
    for (int a = 0; a < d.count; ++a)
      for (int b = 0; b < d.count; ++b)
        if (d.basis[a] >= 0 && d.basis[b] >= 0)
          pred(d.basis[a], d.basis[b]) += drho * d.block(a, b);
    CHECK((bumped - base - pred).cwiseAbs().maxCoeff() <=
          1e-5 * pred.cwiseAbs().maxCoeff());
  }

  SECTION("dimension mismatch is rejected") {
    CHECK_THROWS_AS(assemble_material_matrix(Vec::Ones(T + 1), elems, model,
                                             basis.size()),
                    ConfigError);
  }
}

TEST_CASE("material matrix derivative blocks") {
  auto m = mesh::generate_plate_mesh(0.6, 0.4, 3, 2, DiagonalRule::fixed);
  m.region[2] = mesh::Region::fixed;
  const auto basis = mesh::build_rwg(m);
  const auto elems = em::assemble_material_elements(m, basis);
  const MaterialModel model;
  const Vec rho = Vec::Constant(m.triangle_count(), 0.4);

  SECTION("support is at most a 3x3 block and symmetric") {
    const auto d = material_matrix_derivative(rho, elems, m, 4, model);
    CHECK(d.count <= 3);
    CHECK((d.block - d.block.transpose()).cwiseAbs().maxCoeff() <=
          1e-14 * (1.0 + d.block.cwiseAbs().maxCoeff()));
    int nnz = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (std::abs(d.block(a, b)) > 0.0) ++nnz;
    CHECK(nnz <= 9);
  }

  SECTION("non-design triangles are rejected") {
    CHECK_THROWS_AS(material_matrix_derivative(rho, elems, m, 2, model),
                    ConfigError);
    CHECK_THROWS_AS(material_matrix_derivative(rho, elems, m, -1, model),
                    ConfigError);
  }
}
