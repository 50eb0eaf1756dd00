#ifndef NR4DER_SYNTHETIC_HPP
#define NR4DER_SYNTHETIC_HPP

#include "nr4der/datamodel.hpp"
#include "nr4der/tensor.hpp"

namespace nr4der::datamodel {

// Synthetic long-tailed population. Interaction counts follow a power law
// across students. Each student belongs to one of a handful of archetypes —
// shared interest profiles over the concepts — and practices along that
// profile, half the time shaded toward concepts they have not mastered yet.
// Active students roam beyond their archetype core; inactive students stay
// inside it. Correctness is drawn from a latent per-concept mastery that
// rises with practice.
struct SyntheticConfig {
    int students = 200;
    int concepts = 20;
    int exercises = 100;
    double skew = 1.5;      // power-law exponent over student ranks
    int max_length = 400;   // rank-1 student's interaction count
    int min_length = 8;
    int archetypes = 6;
    // share of steps steered toward not-yet-mastered concepts; the rest
    // follow the archetype preferences alone
    double frontier_bias = 0.8;
    double gain = 0.08;     // mastery gain per practice of a covered concept
    double init_mastery_lo = 0.05;
    double init_mastery_hi = 0.35;
    std::uint64_t seed = 42;
};

struct SyntheticResult {
    Dataset dataset;
    // N x M, rows in dataset student order.
    tensorkit::Matrix initial_mastery;
    tensorkit::Matrix final_mastery;
};

SyntheticResult generate_synthetic(const SyntheticConfig& cfg);

}  // namespace nr4der::datamodel

#endif
