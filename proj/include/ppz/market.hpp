#pragma once

#include <Eigen/Core>

namespace ppz {

// Per-location snapshot consumed by the optimizers.
//
//   d      app-opens (riders deciding whether to request)
//   s0     idle drivers eligible for a new repositioning incentive
//   s_bar  drivers already holding an incentive (count toward balance only)
//   r      reserve driver level per dispatch neighborhood
//   f      expected time-and-distance fare
//   e      available escrow balance (dollars)
struct MarketState {
  Eigen::VectorXd d, s0, s_bar, r, f, e;

  void validate(int n) const;
};

// Price-modifier elasticity: conversion decays exponentially from 1 at the
// base price, y(x) = exp(-beta (x - 1)). Modifiers are bounded to
// [1, x_max], so quantiles live in [y_min, 1] with y_min = y(x_max).
struct ConversionModel {
  Eigen::VectorXd beta;
  double x_max = 5.0;

  Eigen::VectorXd convert(const Eigen::VectorXd& x) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& y) const;
  Eigen::VectorXd y_min() const;

  void validate(int n) const;
};

}  // namespace ppz
