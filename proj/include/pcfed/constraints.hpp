#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "pcfed/numerics.hpp"

namespace pcfed {

// Closed convex set an agent keeps private. Implementations must provide an
// exact Euclidean projection; everything downstream (penalty gradients,
// infeasibility metrics) is defined through project().
class ConstraintSetImpl {
 public:
  virtual ~ConstraintSetImpl() = default;
  virtual ParamVector project(const ParamVector& x) const = 0;
  virtual bool contains(const ParamVector& x, double tol) const = 0;
  virtual std::string describe() const = 0;
  // True only for the whole-space set, where project is the identity.
  virtual bool is_identity() const { return false; }
};

class ConstraintSet {
 public:
  ConstraintSet();  // unconstrained by default
  explicit ConstraintSet(std::shared_ptr<const ConstraintSetImpl> impl);

  static ConstraintSet unconstrained();
  static ConstraintSet l1_ball(double radius);
  static ConstraintSet box(ParamVector lower, ParamVector upper);
  static ConstraintSet halfspace(ParamVector normal, double offset);  // a.x <= c

  ParamVector project(const ParamVector& x) const;
  bool contains(const ParamVector& x, double tol = 0.0) const;
  bool is_unconstrained() const;

  // penalty(x)  = 0.5 * || x - project(x) ||^2
  // gradient(x) = x - project(x); 1-Lipschitz for any closed convex set.
  double penalty_value(const ParamVector& x) const;
  ParamVector penalty_grad(const ParamVector& x) const;

  // Distance of x to the set (the square root of 2 * penalty_value).
  double distance(const ParamVector& x) const;

  std::string describe() const;

 private:
  std::shared_ptr<const ConstraintSetImpl> impl_;
};

}  // namespace pcfed
