#include "ppz/market.hpp"

#include <cmath>
#include <stdexcept>

namespace ppz {

void MarketState::validate(int n) const {
  auto check = [&](const Eigen::VectorXd& v, const char* name, bool nonneg) {
    if (v.size() != n) throw std::invalid_argument(std::string(name) + ": wrong length");
    for (int i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) throw std::invalid_argument(std::string(name) + ": non-finite entry");
      if (nonneg && v[i] < 0) throw std::invalid_argument(std::string(name) + ": negative entry");
    }
  };
  check(d, "d", true);
  check(s0, "s0", true);
  check(s_bar, "s_bar", true);
  check(r, "r", true);
  check(f, "f", true);
  check(e, "e", true);
}

void ConversionModel::validate(int n) const {
  if (beta.size() != n) throw std::invalid_argument("beta: wrong length");
  if ((beta.array() <= 0).any()) throw std::invalid_argument("beta must be strictly positive");
  if (x_max < 1) throw std::invalid_argument("x_max must be >= 1");
}

Eigen::VectorXd ConversionModel::convert(const Eigen::VectorXd& x) const {
  if (x.size() != beta.size()) throw std::invalid_argument("convert: dimension mismatch");
  if ((x.array() < 1.0).any()) throw std::invalid_argument("convert: price modifier below 1");
  return (-(beta.array() * (x.array() - 1.0))).exp();
}

Eigen::VectorXd ConversionModel::invert(const Eigen::VectorXd& y) const {
  if (y.size() != beta.size()) throw std::invalid_argument("invert: dimension mismatch");
  if ((y.array() <= 0.0).any() || (y.array() > 1.0).any())
    throw std::invalid_argument("invert: quantile outside (0, 1]");
  return 1.0 - (y.array().log() / beta.array());
}

Eigen::VectorXd ConversionModel::y_min() const {
  return (-(beta.array() * (x_max - 1.0))).exp();
}

}  // namespace ppz
