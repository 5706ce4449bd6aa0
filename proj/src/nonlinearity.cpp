#include "fracctl/nonlinearity.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fracctl {

Nonlinearity::Nonlinearity(std::string name, PointwiseFn f, PointwiseFn f_u, PointwiseFn f_uu,
                           int differentiability_order, std::size_t node_count,
                           std::optional<double> growth_c)
    : name_(std::move(name)),
      f_(std::move(f)),
      f_u_(std::move(f_u)),
      f_uu_(std::move(f_uu)),
      order_(differentiability_order),
      node_count_(node_count),
      growth_c_(growth_c) {
  if (!f_) throw std::invalid_argument("nonlinearity requires f");
  if (order_ < 0 || order_ > 2) throw std::invalid_argument("differentiability order must be 0, 1 or 2");
  if (order_ >= 1 && !f_u_) throw std::invalid_argument("order >= 1 requires f_u");
  if (order_ >= 2 && !f_uu_) throw std::invalid_argument("order 2 requires f_uu");
}

Nonlinearity::Nonlinearity() : Nonlinearity(zero()) {}

Nonlinearity Nonlinearity::zero() {
  auto zero = [](std::size_t, double) { return 0.0; };
  Nonlinearity nl("zero", zero, zero, zero, 2, 0, 1.0);
  nl.is_zero_ = true;
  return nl;
}

double Nonlinearity::f_u(std::size_t node, double t) const {
  if (order_ < 1) throw NonlinearityError("nonlinearity '" + name_ + "' provides no f_u");
  return f_u_(node, t);
}

double Nonlinearity::f_uu(std::size_t node, double t) const {
  if (order_ < 2) throw NonlinearityError("nonlinearity '" + name_ + "' provides no f_uu");
  return f_uu_(node, t);
}

// PowerLaw -------------------------------------------------------------------

PowerLaw::PowerLaw(GridFunction b, double q) : b_(std::move(b)), q_(q) {
  if (!(q >= 1.0) || !std::isfinite(q)) throw std::invalid_argument("power law requires q >= 1");
  for (std::size_t i = 0; i < b_.size(); ++i) {
    if (!(b_[i] > 0.0) || !std::isfinite(b_[i])) {
      throw std::invalid_argument("power law coefficient b must be positive (node " +
                                  std::to_string(i) + ")");
    }
  }
}

double PowerLaw::f(std::size_t node, double t) const {
  if (q_ == 1.0) return b_[node] * t;
  return b_[node] * std::pow(std::abs(t), q_ - 1.0) * t;
}

double PowerLaw::f_u(std::size_t node, double t) const {
  if (q_ == 1.0) return b_[node];
  return q_ * b_[node] * std::pow(std::abs(t), q_ - 1.0);
}

double PowerLaw::f_uu(std::size_t node, double t) const {
  if (q_ == 1.0) return 0.0;
  if (t == 0.0) {
    if (q_ >= 2.0) return 0.0;
    throw NonlinearityError("power law f_uu is singular at t = 0 for 1 < q < 2");
  }
  const double sign = t > 0.0 ? 1.0 : -1.0;
  return q_ * (q_ - 1.0) * b_[node] * std::pow(std::abs(t), q_ - 2.0) * sign;
}

double PowerLaw::primitive(std::size_t node, double t) const {
  return b_[node] * std::pow(std::abs(t), q_ + 1.0) / (q_ + 1.0);
}

int PowerLaw::differentiability_order() const { return (q_ > 1.0 && q_ < 2.0) ? 1 : 2; }

Nonlinearity PowerLaw::as_nonlinearity() const {
  // Shared copy so the closures stay valid independent of *this.
  auto self = std::make_shared<PowerLaw>(*this);
  std::ostringstream name;
  name << "power_law(q=" << q_ << ")";
  return Nonlinearity(
      name.str(), [self](std::size_t i, double t) { return self->f(i, t); },
      [self](std::size_t i, double t) { return self->f_u(i, t); },
      [self](std::size_t i, double t) { return self->f_uu(i, t); }, differentiability_order(),
      b_.size(), std::pow(2.0, 1.0 - q_));
}

GridFunction eval_field(const Nonlinearity& nl, const GridFunction& u, int order) {
  if (order < 0 || order > 2) throw std::invalid_argument("eval_field order must be 0, 1 or 2");
  if (order > nl.differentiability_order()) {
    throw NonlinearityError("derivative of order " + std::to_string(order) +
                            " not available for '" + nl.name() + "'");
  }
  if (nl.node_count() != 0 && nl.node_count() != u.size()) {
    throw std::invalid_argument("nonlinearity is defined on a different grid");
  }
  GridFunction out(u.grid());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double t = u[i];
    const double v = order == 0 ? nl.f(i, t) : (order == 1 ? nl.f_u(i, t) : nl.f_uu(i, t));
    if (std::isnan(v)) {
      throw NonlinearityError("NaN evaluating '" + nl.name() + "' at node " + std::to_string(i));
    }
    out[i] = v;
  }
  return out;
}

// Verifiers ------------------------------------------------------------------

namespace {

struct Sampler {
  explicit Sampler(const SamplingOptions& o, std::size_t node_count)
      : rng(o.seed), value(-o.range, o.range), unit(0.0, 1.0),
        node(0, node_count == 0 ? 0 : node_count - 1) {}
  std::mt19937_64 rng;
  std::uniform_real_distribution<double> value;
  std::uniform_real_distribution<double> unit;
  std::uniform_int_distribution<std::size_t> node;
};

}  // namespace

GrowthReport check_growth(const Nonlinearity& nl, double c, const SamplingOptions& options) {
  if (!(c > 0.0 && c <= 1.0)) throw std::invalid_argument("growth constant must lie in (0,1]");
  if (!(options.range > 0.0)) throw std::invalid_argument("sampling range must be positive");
  Sampler sampler(options, nl.node_count());
  GrowthReport report;
  report.samples = options.samples;
  for (std::size_t k = 0; k < options.samples; ++k) {
    const std::size_t x = sampler.node(sampler.rng);
    const double xi = sampler.value(sampler.rng);
    const double eta = sampler.value(sampler.rng);
    const double lhs = std::abs(nl.f(x, xi - eta));
    const double fx = nl.f(x, xi);
    const double fy = nl.f(x, eta);
    const double rhs = std::abs(fx - fy);
    const double scale = std::max({lhs, std::abs(fx), std::abs(fy)});
    if (c * lhs > rhs + 1e-12 * scale) ++report.violations;
    if (lhs > 0.0) {
      const double ratio = rhs / lhs;
      if (ratio < report.worst_ratio) {
        report.worst_ratio = ratio;
        report.witness = Witness{x, xi, eta};
      }
    }
  }
  report.pass = report.violations == 0;
  return report;
}

MonotoneOddReport check_monotone_odd(const Nonlinearity& nl, const SamplingOptions& options) {
  if (!(options.range > 0.0)) throw std::invalid_argument("sampling range must be positive");
  Sampler sampler(options, nl.node_count());
  MonotoneOddReport report;
  const std::size_t nodes = std::max<std::size_t>(nl.node_count(), 1);
  for (std::size_t x = 0; x < nodes; ++x) {
    if (nl.f(x, 0.0) != 0.0) report.zero_at_origin = false;
  }
  for (std::size_t k = 0; k < options.samples; ++k) {
    const std::size_t x = sampler.node(sampler.rng);
    const double t1 = sampler.value(sampler.rng);
    // Alternate far pairs with close pairs so local decrease is detectable.
    double t2 = (k % 2 == 0) ? sampler.value(sampler.rng)
                             : t1 + 1e-2 * options.range * (0.1 + 0.9 * sampler.unit(sampler.rng));
    const double lo = std::min(t1, t2);
    const double hi = std::max(t1, t2);
    if (lo < hi && !(nl.f(x, lo) < nl.f(x, hi)) && report.increasing) {
      report.increasing = false;
      report.monotonicity_witness = Witness{x, lo, hi};
    }
    const double ft = nl.f(x, t1);
    const double odd = std::abs(nl.f(x, -t1) + ft) / std::max(1.0, std::abs(ft));
    report.worst_oddness = std::max(report.worst_oddness, odd);
  }
  report.odd = report.worst_oddness <= 1e-12;
  report.pass = report.zero_at_origin && report.odd && report.increasing;
  return report;
}

Delta2Report check_delta2(const PowerLaw& pl, const SamplingOptions& options) {
  if (!(options.range > 0.0)) throw std::invalid_argument("sampling range must be positive");
  Sampler sampler(options, pl.b().size());
  Delta2Report report;
  report.c1 = 1.0 / (pl.q() + 1.0);
  bool bounds_hold = true;
  for (std::size_t k = 0; k < options.samples; ++k) {
    const std::size_t x = sampler.node(sampler.rng);
    const double t = sampler.value(sampler.rng);
    const double tf = t * pl.f(x, t);
    const double big_f = pl.primitive(x, t);
    const double dev = std::abs(tf - (pl.q() + 1.0) * big_f) / std::max(std::abs(tf), 1e-300);
    report.worst_relative_deviation = std::max(report.worst_relative_deviation, dev);
    const double slack = 1e-12 * std::abs(tf);
    if (report.c1 * tf > big_f + slack || big_f > tf + slack) bounds_hold = false;
  }
  report.pass = bounds_hold && report.worst_relative_deviation <= 1e-12;
  return report;
}

}  // namespace fracctl
