#include "cellscout/gumbel.hpp"

#include <algorithm>
#include <cmath>

#include "cellscout/error.hpp"

namespace cellscout {

double open_uniform(Rng& rng) {
    // (bits + 0.5) / 2^53 never hits 0 or 1.
    const auto bits = rng() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double sample_gumbel(Rng& rng) { return -std::log(-std::log(open_uniform(rng))); }

double sample_logistic(Rng& rng) {
    const double u = open_uniform(rng);
    return std::log(u) - std::log1p(-u);
}

std::vector<double> noisy_softmax(std::span<const double> logits, std::span<const double> noise, double temperature) {
    std::vector<double> out(logits.size());
    if (out.empty()) return out;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = (logits[i] + (noise.empty() ? 0.0 : noise[i])) / temperature;
    }
    const double mx = *std::max_element(out.begin(), out.end());
    double sum = 0.0;
    for (double& v : out) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : out) v /= sum;
    return out;
}

std::vector<double> gumbel_softmax(std::span<const double> logits, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw Error("InvalidTemperature", "temperature must be > 0");
    for (double v : logits) {
        if (!std::isfinite(v)) throw Error("NonFiniteLogits", "logits must be finite");
    }
    std::vector<double> noise(logits.size());
    for (double& g : noise) g = sample_gumbel(rng);
    return noisy_softmax(logits, noise, temperature);
}

}  // namespace cellscout
