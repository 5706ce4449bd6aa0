#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "fracctl/grid.hpp"

namespace fracctl {

/// Pointwise map f(x, t) with optional derivatives in t. The spatial
/// argument is the flattened node index of the grid the fields live on.
using PointwiseFn = std::function<double(std::size_t node, double t)>;

class Nonlinearity {
 public:
  /// Same as zero().
  Nonlinearity();
  /// `node_count` is the number of nodes the spatial dependence is defined
  /// on; 0 means x-independent.
  Nonlinearity(std::string name, PointwiseFn f, PointwiseFn f_u, PointwiseFn f_uu,
               int differentiability_order, std::size_t node_count = 0,
               std::optional<double> growth_c = std::nullopt);

  /// f == 0 (linear state equation).
  static Nonlinearity zero();

  const std::string& name() const { return name_; }
  int differentiability_order() const { return order_; }
  std::optional<double> growth_constant() const { return growth_c_; }
  std::size_t node_count() const { return node_count_; }
  bool is_zero() const { return is_zero_; }

  double f(std::size_t node, double t) const { return f_(node, t); }
  double f_u(std::size_t node, double t) const;
  double f_uu(std::size_t node, double t) const;

 private:
  std::string name_ = "zero";
  PointwiseFn f_;
  PointwiseFn f_u_;
  PointwiseFn f_uu_;
  int order_ = 2;
  std::size_t node_count_ = 0;
  std::optional<double> growth_c_;
  bool is_zero_ = false;
};

/// f(x,t) = b(x) |t|^{q-1} t with b > 0 nodewise and q >= 1.
class PowerLaw {
 public:
  PowerLaw(GridFunction b, double q);
  static PowerLaw constant(const Grid& grid, double b, double q) {
    return PowerLaw(GridFunction(grid, b), q);
  }

  const GridFunction& b() const { return b_; }
  double q() const { return q_; }

  double f(std::size_t node, double t) const;
  double f_u(std::size_t node, double t) const;
  /// q(q-1) b |t|^{q-2} sign(t), taken as 0 at t = 0 when q >= 2.
  double f_uu(std::size_t node, double t) const;
  /// Primitive F(x,t) = b |t|^{q+1} / (q+1).
  double primitive(std::size_t node, double t) const;

  /// 2 for q = 1 or q >= 2; 1 for 1 < q < 2 (f_uu blows up at 0).
  int differentiability_order() const;

  /// Wraps the power law; the growth constant 2^{1-q} is attached.
  Nonlinearity as_nonlinearity() const;

 private:
  GridFunction b_;
  double q_;
};

/// Raised when a requested derivative does not exist (order too high, or a
/// singular second derivative at t = 0).
class NonlinearityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Nodewise f (order 0), f_u (order 1) or f_uu (order 2) of u.
GridFunction eval_field(const Nonlinearity& nl, const GridFunction& u, int order);

// Structural verifiers ------------------------------------------------------

struct Witness {
  std::size_t node = 0;
  double xi = 0.0;
  double eta = 0.0;
};

struct GrowthReport {
  bool pass = true;
  /// min |f(xi) - f(eta)| / |f(xi - eta)|; +inf when every denominator is 0.
  double worst_ratio = std::numeric_limits<double>::infinity();
  /// Sample attaining worst_ratio.
  std::optional<Witness> witness;
  std::size_t samples = 0;
  std::size_t violations = 0;
};

struct SamplingOptions {
  std::size_t samples = 10000;
  double range = 10.0;
  std::uint64_t seed = 1;
};

/// Samples c |f(x, xi-eta)| <= |f(x, xi) - f(x, eta)| over nodes x [-M, M]^2.
GrowthReport check_growth(const Nonlinearity& nl, double c, const SamplingOptions& options);

struct MonotoneOddReport {
  bool pass = true;
  bool zero_at_origin = true;
  bool odd = true;
  bool increasing = true;
  std::optional<Witness> monotonicity_witness;
  double worst_oddness = 0.0;
};

MonotoneOddReport check_monotone_odd(const Nonlinearity& nl, const SamplingOptions& options);

struct Delta2Report {
  bool pass = true;
  /// max |t f - (q+1) F| / max(|t f|, tiny) over samples.
  double worst_relative_deviation = 0.0;
  /// The constant c_1 = 1/(q+1) that makes c_1 t f <= F <= t f hold.
  double c1 = 0.0;
};

Delta2Report check_delta2(const PowerLaw& pl, const SamplingOptions& options);

}  // namespace fracctl
