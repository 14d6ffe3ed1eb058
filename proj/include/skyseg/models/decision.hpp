#pragma once

#include <cmath>
#include <limits>

namespace skyseg {

/// MAP decision with a virtual prior: the cloud score is p * lambda and the
/// clear score is 1 - p * lambda. Exact ties go to cloud.
inline bool decide_cloud(double p_cloud, double lambda) {
    const double cloud = p_cloud * lambda;
    return cloud >= 1.0 - cloud;
}

/// Energy offset b that reproduces decide_cloud on a log-odds scale:
/// cloud iff log p/(1-p) >= b. Infinite for lambda <= 1/2 (never cloud).
inline double lambda_log_odds_threshold(double lambda) {
    if (!(lambda > 0.5)) return std::numeric_limits<double>::infinity();
    return -std::log(2.0 * lambda - 1.0);
}

}  // namespace skyseg
