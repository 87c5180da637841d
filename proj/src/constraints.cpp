#include "pcfed/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "pcfed/errors.hpp"

namespace pcfed {

namespace {

class Unconstrained final : public ConstraintSetImpl {
 public:
  ParamVector project(const ParamVector& x) const override { return x; }
  bool contains(const ParamVector&, double) const override { return true; }
  std::string describe() const override { return "unconstrained"; }
  bool is_identity() const override { return true; }
};

// Euclidean projection onto {x : ||x||_1 <= radius} by magnitude sort and
// soft threshold. O(n log n), exact up to roundoff.
class L1Ball final : public ConstraintSetImpl {
 public:
  explicit L1Ball(double radius) : radius_(radius) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
      throw ValidationError("l1_ball: radius must be positive and finite");
    }
  }

  ParamVector project(const ParamVector& x) const override {
    double l1 = 0.0;
    for (double v : x) l1 += std::fabs(v);
    if (l1 <= radius_) return x;

    std::vector<double> mags(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) mags[i] = std::fabs(x[i]);
    std::sort(mags.begin(), mags.end(), std::greater<double>());

    double running = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < mags.size(); ++j) {
      running += mags[j];
      const double cand = (running - radius_) / static_cast<double>(j + 1);
      if (mags[j] - cand > 0.0) {
        theta = cand;
      } else {
        break;
      }
    }

    ParamVector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double shrunk = std::fabs(x[i]) - theta;
      out[i] = shrunk > 0.0 ? std::copysign(shrunk, x[i]) : 0.0;
    }
    return out;
  }

  bool contains(const ParamVector& x, double tol) const override {
    double l1 = 0.0;
    for (double v : x) l1 += std::fabs(v);
    return l1 <= radius_ + tol;
  }

  std::string describe() const override {
    return "l1_ball(radius=" + std::to_string(radius_) + ")";
  }

 private:
  double radius_;
};

class Box final : public ConstraintSetImpl {
 public:
  Box(ParamVector lower, ParamVector upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    require_same_size(lower_, upper_, "box");
    for (std::size_t i = 0; i < lower_.size(); ++i) {
      if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || lower_[i] > upper_[i]) {
        throw ValidationError("box: need finite lower <= upper per coordinate");
      }
    }
  }

  ParamVector project(const ParamVector& x) const override {
    require_same_size(x, lower_, "box.project");
    ParamVector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = std::min(std::max(x[i], lower_[i]), upper_[i]);
    }
    return out;
  }

  bool contains(const ParamVector& x, double tol) const override {
    require_same_size(x, lower_, "box.contains");
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < lower_[i] - tol || x[i] > upper_[i] + tol) return false;
    }
    return true;
  }

  std::string describe() const override {
    return "box(dim=" + std::to_string(lower_.size()) + ")";
  }

 private:
  ParamVector lower_;
  ParamVector upper_;
};

class Halfspace final : public ConstraintSetImpl {
 public:
  Halfspace(ParamVector normal, double offset)
      : normal_(std::move(normal)), offset_(offset) {
    norm_sq_ = norm_sq(normal_);
    if (!(norm_sq_ > 0.0) || !std::isfinite(norm_sq_) || !std::isfinite(offset_)) {
      throw ValidationError("halfspace: need finite nonzero normal and finite offset");
    }
  }

  ParamVector project(const ParamVector& x) const override {
    require_same_size(x, normal_, "halfspace.project");
    const double slack = dot(normal_, x) - offset_;
    if (slack <= 0.0) return x;
    ParamVector out = x;
    add_scaled_inplace(out, -slack / norm_sq_, normal_);
    return out;
  }

  bool contains(const ParamVector& x, double tol) const override {
    require_same_size(x, normal_, "halfspace.contains");
    return dot(normal_, x) <= offset_ + tol;
  }

  std::string describe() const override {
    return "halfspace(dim=" + std::to_string(normal_.size()) + ")";
  }

 private:
  ParamVector normal_;
  double offset_;
  double norm_sq_;
};

}  // namespace

ConstraintSet::ConstraintSet() : impl_(std::make_shared<Unconstrained>()) {}

ConstraintSet::ConstraintSet(std::shared_ptr<const ConstraintSetImpl> impl)
    : impl_(std::move(impl)) {
  if (!impl_) throw ValidationError("ConstraintSet: null implementation");
}

ConstraintSet ConstraintSet::unconstrained() { return ConstraintSet(); }

ConstraintSet ConstraintSet::l1_ball(double radius) {
  return ConstraintSet(std::make_shared<L1Ball>(radius));
}

ConstraintSet ConstraintSet::box(ParamVector lower, ParamVector upper) {
  return ConstraintSet(std::make_shared<Box>(std::move(lower), std::move(upper)));
}

ConstraintSet ConstraintSet::halfspace(ParamVector normal, double offset) {
  return ConstraintSet(std::make_shared<Halfspace>(std::move(normal), offset));
}

ParamVector ConstraintSet::project(const ParamVector& x) const {
  require_finite(x, "ConstraintSet.project input");
  ParamVector out = impl_->project(x);
  require_finite(out, "ConstraintSet.project output");
  return out;
}

bool ConstraintSet::contains(const ParamVector& x, double tol) const {
  return impl_->contains(x, tol);
}

bool ConstraintSet::is_unconstrained() const { return impl_->is_identity(); }

double ConstraintSet::penalty_value(const ParamVector& x) const {
  const ParamVector p = project(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - p[i];
    acc += d * d;
  }
  return 0.5 * acc;
}

ParamVector ConstraintSet::penalty_grad(const ParamVector& x) const {
  const ParamVector p = project(x);
  ParamVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - p[i];
  return out;
}

double ConstraintSet::distance(const ParamVector& x) const {
  return std::sqrt(2.0 * penalty_value(x));
}

std::string ConstraintSet::describe() const { return impl_->describe(); }

}  // namespace pcfed
