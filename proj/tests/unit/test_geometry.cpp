#include <cmath>
#include <vector>

#include "doctest.h"
#include "geometre/errors.hpp"
#include "geometre/geometry.hpp"
#include "geometre/random.hpp"

using namespace geometre;

namespace {

Box corners(Vector lo, Vector hi) { return box_from_corners(lo, hi); }

RelationEmbedding rel(Vector r1, Vector r2, Vector r3, Vector r4) {
  RelationEmbedding r;
  r.r1 = std::move(r1);
  r.r2 = std::move(r2);
  r.r3 = std::move(r3);
  r.r4 = std::move(r4);
  return r;
}

Box random_box(Rng& rng, std::size_t n) {
  Vector c(n), o(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = uniform_real(rng, -5, 5);
    o[i] = uniform_real(rng, 0, 3);
  }
  return Box::from_center_offset(c, o);
}

void check_close(const Box& a, const Box& b, double tol) {
  REQUIRE(a.dim() == b.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) {
    CHECK(std::abs(a.lower()[i] - b.lower()[i]) <= tol);
    CHECK(std::abs(a.upper()[i] - b.upper()[i]) <= tol);
  }
}

}  // namespace

TEST_CASE("box_from_corners derives center and offset") {
  Box b = corners({0, 0}, {2, 4});
  CHECK(b.center() == Vector{1, 2});
  CHECK(b.offset() == Vector{1, 2});

  Box z = corners({3, 3}, {3, 3});
  CHECK(z.center() == Vector{3, 3});
  CHECK(z.offset() == Vector{0, 0});

  CHECK_THROWS_AS(corners({1, 0}, {0, 1}), InvalidArgument);
}

TEST_CASE("corner round trip is exact") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    Box b = random_box(rng, 5);
    auto [lo, hi] = corners_from_box(b);
    CHECK(box_from_corners(lo, hi) == b);
  }
}

TEST_CASE("project") {
  Box b = Box::from_center_offset(Vector{1, 2}, Vector{1, 1});
  Box p = project(b, rel({2, 2}, {1, 1}, {1, 1}, {0, 0}));
  CHECK(p.center() == Vector{3, 5});
  CHECK(p.offset() == Vector{1, 1});

  CHECK(project(b, RelationEmbedding::identity(2)) == b);

  Box k = project(b, rel({0, 0}, {5, 5}, {0, 0}, {-2, 2}));
  CHECK(k.center() == Vector{5, 5});
  CHECK(k.offset() == Vector{2, 2});

  CHECK_THROWS_AS(project(b, RelationEmbedding::identity(3)), InvalidArgument);
}

TEST_CASE("intersect") {
  std::vector<Box> two = {corners({0, 0}, {2, 2}), corners({1, 1}, {3, 3})};
  Box i = intersect(two);
  CHECK_FALSE(i.is_empty());
  CHECK(i.lower() == Vector{1, 1});
  CHECK(i.upper() == Vector{2, 2});

  std::vector<Box> one = {corners({0, 0}, {2, 2})};
  CHECK(intersect(one) == one[0]);

  std::vector<Box> disjoint = {corners({0}, {1}), corners({2}, {3})};
  Box e = intersect(disjoint);
  CHECK(e.is_empty());
  CHECK(e.center(0) == doctest::Approx(1.5));
  CHECK(e.offset(0) == 0.0);
  CHECK_FALSE(e.contains(Vector{1.5}));

  CHECK_THROWS_AS(intersect(std::vector<Box>{}), InvalidArgument);
}

TEST_CASE("empty box scores strictly positive everywhere") {
  std::vector<Box> disjoint = {corners({0, 0}, {1, 1}), corners({2, 0}, {3, 1})};
  Box e = intersect(disjoint);
  Rng rng(11);
  for (int t = 0; t < 500; ++t) {
    Vector a = {uniform_real(rng, -4, 6), uniform_real(rng, -4, 6)};
    // Recomputed from the recorded inverted corners: dim 0 has lower 2,
    // upper 1, so any point violates one side by at least 1.
    const double expected = std::max(a[0] - 1, 0.0) + std::max(2 - a[0], 0.0) +
                            std::max(a[1] - 1, 0.0) + std::max(0 - a[1], 0.0);
    CHECK(dist_out(e, a) == doctest::Approx(expected));
    CHECK(dist_out(e, a) >= 1.0);
    CHECK(dist_in(e, a) == 0.0);
  }
}

TEST_CASE("dist_out / dist_in / dist_box examples") {
  Box q = corners({0, 0}, {2, 2});
  CHECK(dist_out(q, Vector{1, 1}) == 0);
  CHECK(dist_out(q, Vector{3, 1}) == 1);
  CHECK(dist_out(q, Vector{3, -1}) == 2);

  CHECK(dist_in(q, Vector{1, 1}) == 0);
  CHECK(dist_in(q, Vector{3, 1}) == 1);
  CHECK(dist_in(q, Vector{0.5, 1}) == 0.5);

  CHECK(dist_box(q, Vector{3, 1}, 0.5) == 1.5);
  CHECK(dist_box(q, Vector{0.3, 1.9}, 0.0) == 0);
  Box z = Box::point(Vector{4, -1});
  CHECK(dist_box(z, Vector{4, -1}, 0.7) == 0);
}

TEST_CASE("dist_ordering examples") {
  CHECK(dist_ordering(1.0, 0.5, 0.1, OrderingDirection::forward) == 0);
  CHECK(dist_ordering(0.5, 1.0, 0.1, OrderingDirection::forward) ==
        doctest::Approx(0.6));
  CHECK(dist_ordering(0.5, 1.0, 0.1, OrderingDirection::inverse) == 0);
}

TEST_CASE("dist_box_tr examples") {
  Box q = corners({0, -7}, {2, 9});  // center[1] = 1
  CHECK(dist_box_tr(q, Vector{1, 0.85}, 1, 0.5, 0.1,
                    OrderingDirection::forward) == 0);

  // Residual dim 0 contributes 1 + 0.5*1 = 1.5; ordering on a center of 0.5
  // with a_1 = 1.0 contributes 0.6.
  Box q2 = corners({0, 0}, {2, 1});
  CHECK(dist_box_tr(q2, Vector{3, 1.0}, 1, 0.5, 0.1,
                    OrderingDirection::forward) == doctest::Approx(2.1));

  Box one = corners({0}, {1});
  CHECK_THROWS_AS(dist_box_tr(one, Vector{0}, 0, 0, 0.1,
                              OrderingDirection::forward),
                  InvalidArgument);
  CHECK_THROWS_AS(dist_box_tr(q2, Vector{0, 0}, 2, 0, 0.1,
                              OrderingDirection::forward),
                  InvalidArgument);
}

TEST_CASE("dist_box_tr equals reduced dist_box plus ordering") {
  Rng rng(5);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 6);
    Box q = random_box(rng, n);
    Vector a(n);
    for (double& x : a) x = uniform_real(rng, -8, 8);
    const std::size_t i = uniform_index(rng, n);
    const double alpha = uniform01(rng);
    const auto dir = uniform01(rng) < 0.5 ? OrderingDirection::forward
                                          : OrderingDirection::inverse;
    Vector lo, hi, ar;
    for (std::size_t d = 0; d < n; ++d) {
      if (d == i) continue;
      lo.push_back(q.lower()[d]);
      hi.push_back(q.upper()[d]);
      ar.push_back(a[d]);
    }
    const double expected = dist_box(box_from_corners(lo, hi), ar, alpha) +
                            dist_ordering(q.center(i), a[i], 0.1, dir);
    CHECK(dist_box_tr(q, a, i, alpha, 0.1, dir) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("containment and dist_in bound") {
  Rng rng(7);
  for (int t = 0; t < 1000; ++t) {
    Box q = random_box(rng, 3);
    Vector a(3);
    for (double& x : a) x = uniform_real(rng, -8, 8);
    bool inside = true;
    for (std::size_t i = 0; i < 3; ++i) {
      inside = inside && q.lower()[i] <= a[i] && a[i] <= q.upper()[i];
    }
    CHECK((dist_out(q, a) == 0.0) == inside);
    double bound = 0;
    for (double o : q.offset()) bound += o;
    CHECK(dist_in(q, a) <= bound + 1e-12);
  }
}

TEST_CASE("intersect is commutative, associative, idempotent, monotone") {
  Rng rng(9);
  for (int t = 0; t < 300; ++t) {
    Box a = random_box(rng, 4), b = random_box(rng, 4), c = random_box(rng, 4);
    std::vector<Box> ab = {a, b}, ba = {b, a}, aa = {a, a};
    CHECK(intersect(ab) == intersect(ba));
    CHECK(intersect(aa) == a);
    std::vector<Box> left = {intersect(ab), c};
    std::vector<Box> bc = {b, c};
    std::vector<Box> right = {a, intersect(bc)};
    std::vector<Box> all = {a, b, c};
    CHECK(intersect(left).lower() == intersect(right).lower());
    CHECK(intersect(left).upper() == intersect(all).upper());
    Box i = intersect(all);
    if (!i.is_empty()) {
      for (const Box& x : all) {
        for (std::size_t d = 0; d < 4; ++d) {
          CHECK(x.lower()[d] <= i.lower()[d]);
          CHECK(i.upper()[d] <= x.upper()[d]);
        }
      }
    }
  }
}

TEST_CASE("classify_idempotency") {
  CHECK(classify_idempotency(RelationEmbedding::identity(3)) ==
        Idempotency::identity);
  CHECK(classify_idempotency(rel({0}, {7}, {0}, {3})) == Idempotency::constant);
  CHECK(classify_idempotency(rel({0.5}, {0}, {0}, {0})) ==
        Idempotency::not_idempotent);
  CHECK(classify_idempotency(rel({0}, {7}, {0}, {-1})) ==
        Idempotency::not_idempotent);
}

TEST_CASE("idempotent relations are idempotent; others have witnesses") {
  Rng rng(13);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 8);
    Box b = random_box(rng, n);
    RelationEmbedding r = RelationEmbedding::identity(n);
    if (t % 2) {
      for (std::size_t i = 0; i < n; ++i) {
        r.r1[i] = 0;
        r.r3[i] = 0;
        r.r2[i] = uniform_real(rng, -5, 5);
        r.r4[i] = uniform_real(rng, 0, 3);
      }
    }
    REQUIRE(classify_idempotency(r) != Idempotency::not_idempotent);
    Box once = project(b, r);
    check_close(project(once, r), once, 1e-9);
  }
}

TEST_CASE("overlap probability closed form") {
  CHECK(overlap_probability_closed_form(10, 1, 1) == doctest::Approx(0.2));
  CHECK(overlap_probability_closed_form(10, 1, 5) == doctest::Approx(3.2e-4));
  CHECK(overlap_probability_closed_form(10, 6, 4) == 1.0);
}

TEST_CASE("overlap probability estimate") {
  auto a = estimate_overlap_probability(10, 1, 2, 20000, 42);
  auto b = estimate_overlap_probability(10, 1, 2, 20000, 42);
  CHECK(a.estimate == b.estimate);
  CHECK(a.std_error == b.std_error);

  CHECK(estimate_overlap_probability(10, 6, 3, 5000, 1).estimate == 1.0);

  // Independent oracle: for two centers uniform on [0, L] the per-dimension
  // overlap probability is 1 - (1 - 2 sigma / L)^2.
  for (int n : {1, 2, 3}) {
    auto e = estimate_overlap_probability(10, 1, n, 200000, 17);
    const double exact = std::pow(1 - std::pow(1 - 0.2, 2), n);
    CHECK(std::abs(e.estimate - exact) <= 4 * e.std_error);
    CHECK(overlap_probability_exact(10, 1, n) == doctest::Approx(exact));
  }
  CHECK(overlap_probability_exact(10, 6, 2) == 1.0);
}

TEST_CASE("complement intersection check") {
  CHECK(complement_intersection_check(corners({0}, {1}), corners({2}, {3}),
                                      1000, 1));
  CHECK(complement_intersection_check(corners({0, 0}, {1, 1}),
                                      corners({5, 5}, {6, 6}), 1000, 1));
  CHECK_THROWS_AS(complement_intersection_check(corners({0}, {2}),
                                                corners({1}, {3}), 10, 1),
                  InvalidArgument);
}
