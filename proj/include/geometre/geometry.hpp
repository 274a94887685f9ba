#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace geometre {

using Vector = std::vector<double>;
using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Axis-aligned box stored by its corners. Center and offset are derived as
// (upper + lower) / 2 and (upper - lower) / 2.
//
// An empty box is what an intersection yields when some lower[i] > upper[i].
// It keeps the inverted corners so that dist_out stays strictly positive for
// every point, while its center/offset view is the zero-volume box at the
// midpoint of those corners.
class Box {
 public:
  Box() = default;

  // Requires lower[i] <= upper[i]; throws InvalidArgument otherwise.
  static Box from_corners(Vector lower, Vector upper);
  // Requires offset[i] >= 0.
  static Box from_center_offset(std::span<const double> center,
                                std::span<const double> offset);
  // Zero-volume box at a point.
  static Box point(std::span<const double> at);

  std::size_t dim() const { return lower_.size(); }
  bool is_empty() const { return empty_; }

  // For an empty box these are the recorded (inverted) corners.
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }

  double center(std::size_t i) const { return 0.5 * (upper_[i] + lower_[i]); }
  double offset(std::size_t i) const {
    return empty_ ? 0.0 : 0.5 * (upper_[i] - lower_[i]);
  }
  Vector center() const;
  Vector offset() const;

  // Closed-box membership; always false for an empty box.
  bool contains(std::span<const double> p) const;

  bool operator==(const Box&) const = default;

 private:
  friend Box intersect(std::span<const Box> boxes);

  Vector lower_;
  Vector upper_;
  bool empty_ = false;
};

Box box_from_corners(Vector lower, Vector upper);
std::pair<Vector, Vector> corners_from_box(const Box& box);

// Which side of the ordering margin the answer must fall on.
enum class OrderingDirection { forward, inverse };

// Affine box transform (r1, r2, r3, r4) of one relation, plus the transitive
// bookkeeping the scoring path needs.
struct RelationEmbedding {
  Vector r1, r2, r3, r4;
  bool transitive = false;
  std::optional<std::size_t> transitive_dim;
  std::optional<RelationId> inverse_of;
  OrderingDirection ordering = OrderingDirection::forward;

  std::size_t dim() const { return r1.size(); }

  static RelationEmbedding identity(std::size_t n);
};

// center' = r1 * center + r2, offset' = |r3 * offset + r4| (coordinate-wise).
// An empty input is projected through its zero-volume canonical box.
Box project(const Box& b, const RelationEmbedding& r);

// Coordinate-wise max of lowers / min of uppers. Returns an empty box when
// the result has inverted corners. Throws on an empty list.
Box intersect(std::span<const Box> boxes);

double dist_out(const Box& q, std::span<const double> a);
double dist_in(const Box& q, std::span<const double> a);
double dist_box(const Box& q, std::span<const double> a, double alpha);

double dist_ordering(double query_value, double answer_value, double lambda,
                     OrderingDirection direction);

// dist_box over every coordinate except `dim`, plus the ordering term on the
// centers at `dim`. Needs q.dim() >= 2.
double dist_box_tr(const Box& q, std::span<const double> a, std::size_t dim,
                   double alpha, double lambda, OrderingDirection direction);

enum class Idempotency { identity, constant, not_idempotent };

Idempotency classify_idempotency(const RelationEmbedding& r,
                                 double tol = 1e-6);

// Probability that two boxes with centers uniform in [0, L]^n and constant
// offsets sigma overlap: min(1, 2 sigma / L)^n.
double overlap_probability_closed_form(double length, double sigma, int n);

// The same probability computed exactly for independent uniform centers:
// per dimension P(|c1 - c2| <= 2 sigma) = 1 - (1 - min(1, 2 sigma / L))^2.
double overlap_probability_exact(double length, double sigma, int n);

struct OverlapEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo counterpart of overlap_probability_closed_form.
OverlapEstimate estimate_overlap_probability(double length, double sigma,
                                             int n, std::uint64_t samples,
                                             std::uint64_t seed);

// Samples points uniformly in b2 and reports whether all of them fall outside
// b1. The boxes must be disjoint.
bool complement_intersection_check(const Box& b1, const Box& b2,
                                   std::uint64_t samples, std::uint64_t seed);

}  // namespace geometre
