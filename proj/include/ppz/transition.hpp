#pragma once

#include <map>
#include <utility>
#include <vector>

namespace ppz {

// Driver movement model. For every valid origin->destination incentive pair
// the landing distribution gives the probability of ending the period at each
// location; leftover mass is the driver going offline. Compliance with a pair
// (i, j) is by definition the probability of landing at j. Drivers without an
// incentive stay open with probability p_stay.
struct TransitionModel {
  struct Landing {
    int location;
    double prob;
  };

  double p_stay = 1.0;  // P0
  std::map<std::pair<int, int>, std::vector<Landing>> p_dest;

  const std::vector<Landing>& landings(int origin, int dest) const;
  double comply_prob(int origin, int dest) const;

  void validate(int n) const;

  // Landing distribution concentrated on {origin, dest}:
  // comply with probability p_comply, stay with p_fail_stay.
  static TransitionModel simple(double p_stay,
                                const std::vector<std::pair<int, int>>& pairs,
                                double p_comply, double p_fail_stay);
};

}  // namespace ppz
