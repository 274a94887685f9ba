#include "geometre/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "geometre/errors.hpp"
#include "geometre/random.hpp"

namespace geometre {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" +
                          std::to_string(a) + " vs " + std::to_string(b) +
                          ")");
  }
}

// dist_out + alpha * dist_in restricted to every coordinate except `skip`.
double dist_box_except(const Box& q, std::span<const double> a, double alpha,
                       std::size_t skip) {
  const auto& lo = q.lower();
  const auto& hi = q.upper();
  double out = 0.0;
  double in = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    if (i == skip) continue;
    out += std::max(a[i] - hi[i], 0.0) + std::max(lo[i] - a[i], 0.0);
    if (!q.is_empty()) {
      const double clamped = std::min(hi[i], std::max(lo[i], a[i]));
      in += std::abs(q.center(i) - clamped);
    }
  }
  return out + alpha * in;
}

}  // namespace

Box Box::from_corners(Vector lower, Vector upper) {
  require_same_dim(lower.size(), upper.size(), "box_from_corners");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!(lower[i] <= upper[i])) {
      throw InvalidArgument("box_from_corners: lower[" + std::to_string(i) +
                            "] > upper[" + std::to_string(i) + "]");
    }
  }
  Box b;
  b.lower_ = std::move(lower);
  b.upper_ = std::move(upper);
  return b;
}

Box Box::from_center_offset(std::span<const double> center,
                            std::span<const double> offset) {
  require_same_dim(center.size(), offset.size(), "Box::from_center_offset");
  Vector lo(center.size());
  Vector hi(center.size());
  for (std::size_t i = 0; i < center.size(); ++i) {
    if (!(offset[i] >= 0.0)) {
      throw InvalidArgument("Box::from_center_offset: negative offset");
    }
    lo[i] = center[i] - offset[i];
    hi[i] = center[i] + offset[i];
  }
  return from_corners(std::move(lo), std::move(hi));
}

Box Box::point(std::span<const double> at) {
  Vector v(at.begin(), at.end());
  return from_corners(v, v);
}

Vector Box::center() const {
  Vector c(dim());
  for (std::size_t i = 0; i < dim(); ++i) c[i] = center(i);
  return c;
}

Vector Box::offset() const {
  Vector o(dim());
  for (std::size_t i = 0; i < dim(); ++i) o[i] = offset(i);
  return o;
}

bool Box::contains(std::span<const double> p) const {
  if (empty_) return false;
  require_same_dim(dim(), p.size(), "Box::contains");
  for (std::size_t i = 0; i < dim(); ++i) {
    if (p[i] < lower_[i] || p[i] > upper_[i]) return false;
  }
  return true;
}

Box box_from_corners(Vector lower, Vector upper) {
  return Box::from_corners(std::move(lower), std::move(upper));
}

std::pair<Vector, Vector> corners_from_box(const Box& box) {
  return {box.lower(), box.upper()};
}

RelationEmbedding RelationEmbedding::identity(std::size_t n) {
  RelationEmbedding r;
  r.r1.assign(n, 1.0);
  r.r2.assign(n, 0.0);
  r.r3.assign(n, 1.0);
  r.r4.assign(n, 0.0);
  return r;
}

Box project(const Box& b, const RelationEmbedding& r) {
  const std::size_t n = b.dim();
  require_same_dim(n, r.r1.size(), "project");
  require_same_dim(n, r.r2.size(), "project");
  require_same_dim(n, r.r3.size(), "project");
  require_same_dim(n, r.r4.size(), "project");
  Vector center(n);
  Vector offset(n);
  for (std::size_t i = 0; i < n; ++i) {
    center[i] = r.r1[i] * b.center(i) + r.r2[i];
    offset[i] = std::abs(r.r3[i] * b.offset(i) + r.r4[i]);
  }
  return Box::from_center_offset(center, offset);
}

Box intersect(std::span<const Box> boxes) {
  if (boxes.empty()) throw InvalidArgument("intersect: empty box list");
  const std::size_t n = boxes.front().dim();
  Vector lo = boxes.front().lower();
  Vector hi = boxes.front().upper();
  for (const Box& b : boxes.subspan(1)) {
    require_same_dim(n, b.dim(), "intersect");
    for (std::size_t i = 0; i < n; ++i) {
      lo[i] = std::max(lo[i], b.lower()[i]);
      hi[i] = std::min(hi[i], b.upper()[i]);
    }
  }
  Box out;
  out.empty_ = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (lo[i] > hi[i]) out.empty_ = true;
  }
  out.lower_ = std::move(lo);
  out.upper_ = std::move(hi);
  return out;
}

double dist_out(const Box& q, std::span<const double> a) {
  require_same_dim(q.dim(), a.size(), "dist_out");
  return dist_box_except(q, a, 0.0, q.dim());
}

double dist_in(const Box& q, std::span<const double> a) {
  require_same_dim(q.dim(), a.size(), "dist_in");
  if (q.is_empty()) return 0.0;
  double in = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double clamped =
        std::min(q.upper()[i], std::max(q.lower()[i], a[i]));
    in += std::abs(q.center(i) - clamped);
  }
  return in;
}

double dist_box(const Box& q, std::span<const double> a, double alpha) {
  require_same_dim(q.dim(), a.size(), "dist_box");
  return dist_box_except(q, a, alpha, q.dim());
}

double dist_ordering(double query_value, double answer_value, double lambda,
                     OrderingDirection direction) {
  const double gap = direction == OrderingDirection::forward
                         ? answer_value - query_value
                         : query_value - answer_value;
  return std::max(gap + lambda, 0.0);
}

double dist_box_tr(const Box& q, std::span<const double> a, std::size_t dim,
                   double alpha, double lambda, OrderingDirection direction) {
  require_same_dim(q.dim(), a.size(), "dist_box_tr");
  if (q.dim() < 2) {
    throw InvalidArgument("dist_box_tr: needs at least two dimensions");
  }
  if (dim >= q.dim()) {
    throw InvalidArgument("dist_box_tr: transitive dimension " +
                          std::to_string(dim) + " out of range");
  }
  return dist_box_except(q, a, alpha, dim) +
         dist_ordering(q.center(dim), a[dim], lambda, direction);
}

Idempotency classify_idempotency(const RelationEmbedding& r, double tol) {
  const std::size_t n = r.dim();
  auto near = [tol](double x, double target) {
    return std::abs(x - target) <= tol;
  };
  bool identity = true;
  bool constant = true;
  for (std::size_t i = 0; i < n; ++i) {
    identity = identity && near(r.r1[i], 1.0) && near(r.r2[i], 0.0) &&
               near(r.r3[i], 1.0) && near(r.r4[i], 0.0);
    constant = constant && near(r.r1[i], 0.0) && near(r.r3[i], 0.0) &&
               r.r4[i] >= -tol;
  }
  if (identity) return Idempotency::identity;
  if (constant) return Idempotency::constant;
  return Idempotency::not_idempotent;
}

double overlap_probability_closed_form(double length, double sigma, int n) {
  if (!(length > 0.0) || !(sigma > 0.0) || n < 1) {
    throw InvalidArgument(
        "overlap_probability_closed_form: need L > 0, sigma > 0, n >= 1");
  }
  return std::pow(std::min(1.0, 2.0 * sigma / length), n);
}

double overlap_probability_exact(double length, double sigma, int n) {
  if (!(length > 0.0) || !(sigma > 0.0) || n < 1) {
    throw InvalidArgument("overlap_probability_exact: need L > 0, sigma > 0, n >= 1");
  }
  const double miss = 1.0 - std::min(1.0, 2.0 * sigma / length);
  return std::pow(1.0 - miss * miss, n);
}

OverlapEstimate estimate_overlap_probability(double length, double sigma,
                                             int n, std::uint64_t samples,
                                             std::uint64_t seed) {
  if (samples == 0 || n < 1 || !(length > 0.0) || !(sigma > 0.0)) {
    throw InvalidArgument(
        "estimate_overlap_probability: need samples >= 1, n >= 1, L > 0, "
        "sigma > 0");
  }
  Rng rng(seed);
  const double reach = 2.0 * sigma;
  std::uint64_t hits = 0;
  for (std::uint64_t s = 0; s < samples; ++s) {
    bool overlap = true;
    for (int i = 0; i < n; ++i) {
      const double c1 = uniform_real(rng, 0.0, length);
      const double c2 = uniform_real(rng, 0.0, length);
      if (std::abs(c1 - c2) > reach) overlap = false;
    }
    if (overlap) ++hits;
  }
  OverlapEstimate out;
  out.estimate = static_cast<double>(hits) / static_cast<double>(samples);
  out.std_error = std::sqrt(out.estimate * (1.0 - out.estimate) /
                            static_cast<double>(samples));
  return out;
}

bool complement_intersection_check(const Box& b1, const Box& b2,
                                   std::uint64_t samples, std::uint64_t seed) {
  require_same_dim(b1.dim(), b2.dim(), "complement_intersection_check");
  const Box both[] = {b1, b2};
  if (!intersect(both).is_empty()) {
    throw InvalidArgument(
        "complement_intersection_check: boxes overlap, complement identity "
        "does not apply");
  }
  Rng rng(seed);
  Vector p(b2.dim());
  for (std::uint64_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = uniform_real(rng, b2.lower()[i], b2.upper()[i]);
    }
    if (b1.contains(p)) return false;
  }
  return true;
}

}  // namespace geometre
