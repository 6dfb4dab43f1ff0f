#include <doctest.h>

#include "effpop/core.hpp"
#include "effpop/model.hpp"
#include "effpop/rng.hpp"
#include "effpop/parallel.hpp"
#include "effpop/zoo.hpp"

#include <atomic>
#include <set>

using namespace effpop;

TEST_CASE("type space rejects duplicate and empty labels") {
  CHECK_THROWS_AS(TypeSpace({"a", "a"}), ConfigError);
  CHECK(TypeSpace::numbered(3).label(2) == "x3");
  CHECK(TypeSpace({"m", "f"}).size() == 2);
}

TEST_CASE("covariance tensor contraction matches an explicit triple loop") {
  CovarianceTensor c(3);
  double value = 0.5;
  for (std::size_t z = 0; z < 3; ++z)
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t y = x; y < 3; ++y) {
        c(x, y, z) = value;
        c(y, x, z) = value;
        value += 0.25;
      }
  Vector w(3);
  w << 0.3, -1.2, 2.0;
  const Matrix got = c.contract(w);
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 0; y < 3; ++y) {
      double expect = 0.0;
      for (std::size_t z = 0; z < 3; ++z) expect += c(x, y, z) * w[static_cast<Eigen::Index>(z)];
      CHECK(got(x, y) == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("Philox4x32-10 reproduces the Random123 known-answer vectors") {
  using B = Philox4x32::Block;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::bijection(B{0, 0, 0, 0}, K{0, 0}) == B{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox4x32::bijection(B{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, K{0xffffffffu, 0xffffffffu}) ==
        B{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox4x32::bijection(B{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, K{0xa4093822u, 0x299f31d0u}) ==
        B{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("Philox streams are reproducible and distinct") {
  Philox4x32 a(42, 1, 2), b(42, 1, 2), c(42, 2, 1), d(43, 1, 2);
  std::set<std::uint32_t> seen;
  for (int i = 0; i < 16; ++i) {
    const auto x = a();
    CHECK(x == b());
    seen.insert(x);
    seen.insert(c());
    seen.insert(d());
  }
  CHECK(seen.size() == 48);
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, 4);
  for (auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) { if (i == 7) throw NumericalError("boom"); }, 3),
                  NumericalError);
}

TEST_CASE("assumption checks pass on the zoo and catch a broken noise factor") {
  for (const std::string& name : zoo_names()) {
    const ZooEntry z = make_zoo_entry(name);
    Box box{Vector::Constant(static_cast<Eigen::Index>(z.model.dim()), 0.1),
            Vector::Constant(static_cast<Eigen::Index>(z.model.dim()), 5.0)};
    const ValidationReport r = check_assumptions(z.model, sample_box(box, 20, 3));
    CHECK_MESSAGE(r.all_pass(), name);
  }
  ZooEntry z = lotka_volterra();
  z.model = scaled_noise(z.model, 2.0);
  auto broken = z.model;
  broken.noise_factor = [](const Vector& v, const Vector&, Matrix& out) { out = Matrix::Identity(v.size(), v.size()); };
  Box box{Vector::Constant(2, 0.5), Vector::Constant(2, 3.0)};
  const ValidationReport bad = check_assumptions(broken, sample_box(box, 5, 1));
  CHECK_FALSE(bad.all_pass());
  CHECK(bad.failures() > 0);
}

TEST_CASE("scaled noise multiplies the covariance by the square of the factor") {
  const ZooEntry z = lotka_volterra();
  const DecomposedModel s = scaled_noise(z.model, 3.0);
  Vector v(2);
  v << 1.3, 4.1;
  const Matrix a = total_covariance(z.model, v), b = total_covariance(s, v);
  CHECK((b - 9.0 * a).norm() < 1e-12 * b.norm());
}

TEST_CASE("non-finite model output is reported with the offending state") {
  DecomposedModel m = lotka_volterra().model;
  m.mean_matrix = [](const Vector& v, Matrix& out) { out = Matrix::Constant(v.size(), v.size(), std::nan("")); };
  Vector v = Vector::Ones(2);
  try {
    drift(m, v);
    FAIL("expected EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(e.at() == v);
  }
}
