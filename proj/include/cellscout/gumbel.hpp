#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cellscout/moe_model.hpp"

namespace cellscout {

/// Uniform draw in the open interval (0, 1) from the top 53 bits of one engine output.
double open_uniform(Rng& rng);

/// Standard Gumbel(0, 1) draw: -log(-log U).
double sample_gumbel(Rng& rng);

/// Standard logistic draw: log U - log(1 - U).
double sample_logistic(Rng& rng);

/// softmax((logits + noise) / temperature), computed with max subtraction.
/// `noise` may be empty, meaning zero noise.
std::vector<double> noisy_softmax(std::span<const double> logits, std::span<const double> noise,
                                  double temperature);

/**
 * Gumbel-Softmax relaxation of a categorical draw:
 * softmax((logits + g) / temperature) with g ~ Gumbel(0, 1) i.i.d.
 *
 * Throws `NonFiniteLogits` if any logit is NaN or infinite and
 * `InvalidTemperature` if temperature <= 0.
 */
std::vector<double> gumbel_softmax(std::span<const double> logits, double temperature, Rng& rng);

inline double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace cellscout
