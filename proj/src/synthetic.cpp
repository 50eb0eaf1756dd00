#include "nr4der/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace nr4der::datamodel {

namespace {

std::string padded_id(char prefix, int index, int width) {
    std::string digits = std::to_string(index);
    std::string out(1, prefix);
    out.append(static_cast<std::size_t>(width) - std::min<std::size_t>(digits.size(), width),
               '0');
    out += digits;
    return out;
}

}  // namespace

// defaults are tuned so that attempted exercises sit near difficulty 0.7
SyntheticResult generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.students < 2 || cfg.concepts < 1 || cfg.exercises < cfg.concepts)
        throw ConfigError("synthetic config infeasible: need students >= 2, concepts >= 1, "
                          "exercises >= concepts");
    if (cfg.min_length < 2 || cfg.max_length < cfg.min_length)
        throw ConfigError("synthetic config infeasible: bad length range");
    if (!(cfg.skew > 0.0)) throw ConfigError("synthetic config infeasible: skew must be > 0");

    std::mt19937_64 rng = make_rng(cfg.seed, "synthetic");
    const int N = cfg.students, M = cfg.concepts, E = cfg.exercises;

    // Catalog: exercise j covers concept j mod M so that every concept is
    // covered; most exercises pair it with a random partner concept, which
    // spreads difficulty among exercises sharing a primary concept.
    std::vector<Exercise> catalog(E);
    std::vector<std::vector<int>> by_concept(M);
    for (int j = 0; j < E; ++j) {
        Exercise& e = catalog[j];
        e.id = padded_id('e', j, 4);
        e.coverage.assign(M, 0);
        e.concepts.push_back(j % M);
        if (M > 1 && uniform(rng, 0.0, 1.0) < 0.8) {
            int extra = static_cast<int>(uniform(rng, 0.0, 1.0) * M) % M;
            e.concepts.push_back(extra);
        }
        std::sort(e.concepts.begin(), e.concepts.end());
        e.concepts.erase(std::unique(e.concepts.begin(), e.concepts.end()), e.concepts.end());
        for (int k : e.concepts) e.coverage[k] = 1;
    }
    for (int j = 0; j < E; ++j)
        for (int k : catalog[j].concepts) by_concept[k].push_back(j);

    // Power-law interaction counts by rank; student 0 is the most active.
    std::vector<int> lengths(N);
    for (int r = 0; r < N; ++r) {
        double raw = cfg.max_length * std::pow(static_cast<double>(r + 1), -cfg.skew);
        lengths[r] = std::clamp(static_cast<int>(std::lround(raw)), cfg.min_length,
                                cfg.max_length);
    }

    // Shared interest profiles. Core size 3..6 concepts with Zipf-like
    // weights; the profiles are what a representation enhancer can transfer
    // from active to inactive students.
    const int A = std::max(1, cfg.archetypes);
    std::vector<std::vector<int>> arch_core(A);
    std::vector<std::vector<double>> arch_weight(A);
    for (int a = 0; a < A; ++a) {
        const int core = std::min(M, 3 + static_cast<int>(uniform(rng, 0.0, 1.0) * 4.0));
        std::vector<int> all(M);
        for (int k = 0; k < M; ++k) all[k] = k;
        std::shuffle(all.begin(), all.end(), rng);
        arch_core[a].assign(all.begin(), all.begin() + core);
        for (int i = 0; i < core; ++i)
            arch_weight[a].push_back(1.0 / std::pow(static_cast<double>(i + 1), 1.1));
    }

    tensorkit::Matrix initial(N, M), final_m(N, M);
    std::vector<InteractionSequence> students(N);
    for (int s = 0; s < N; ++s) {
        const int len = lengths[s];
        std::vector<double> mastery(M);
        for (int k = 0; k < M; ++k) {
            mastery[k] = uniform(rng, cfg.init_mastery_lo, cfg.init_mastery_hi);
            initial(s, k) = mastery[k];
        }
        const int archetype = static_cast<int>(uniform(rng, 0.0, static_cast<double>(A))) % A;
        // Active students extend their archetype core across the catalog;
        // inactive students stay focused on it.
        const double frac = (cfg.max_length == cfg.min_length)
                                ? 1.0
                                : static_cast<double>(len - cfg.min_length) /
                                      static_cast<double>(cfg.max_length - cfg.min_length);
        std::vector<int> interest = arch_core[archetype];
        std::vector<double> preference = arch_weight[archetype];
        const int extra = static_cast<int>(
            std::lround((M - static_cast<int>(interest.size())) * std::pow(frac, 0.7)));
        if (extra > 0) {
            std::vector<int> rest;
            for (int k = 0; k < M; ++k)
                if (std::find(interest.begin(), interest.end(), k) == interest.end())
                    rest.push_back(k);
            std::shuffle(rest.begin(), rest.end(), rng);
            for (int i = 0; i < extra && i < static_cast<int>(rest.size()); ++i) {
                interest.push_back(rest[i]);
                preference.push_back(0.25 / std::pow(static_cast<double>(i + 1), 1.1));
            }
        }
        // small personal jitter on the shared profile
        for (double& w : preference) w *= uniform(rng, 0.8, 1.25);

        InteractionSequence& seq = students[s];
        seq.student_id = padded_id('s', s, 4);
        seq.items.reserve(len);
        for (int t = 0; t < len; ++t) {
            // preference-driven choice, shaded toward concepts the student
            // has not mastered yet on a configurable share of steps
            const bool frontier = uniform(rng, 0.0, 1.0) < cfg.frontier_bias;
            double total = 0.0;
            std::vector<double> w(interest.size());
            for (std::size_t i = 0; i < interest.size(); ++i) {
                w[i] = preference[i];
                if (frontier) w[i] *= (1.0 - mastery[interest[i]]) + 0.05;
                total += w[i];
            }
            double u = uniform(rng, 0.0, total);
            std::size_t pick = 0;
            for (; pick + 1 < w.size(); ++pick) {
                if (u < w[pick]) break;
                u -= w[pick];
            }
            const int concept_id = interest[pick];
            const auto& pool = by_concept[concept_id];
            const int exercise = pool[static_cast<std::size_t>(
                uniform(rng, 0.0, static_cast<double>(pool.size()))) % pool.size()];

            double success = 1.0;
            for (int k : catalog[exercise].concepts) success *= mastery[k];
            const int correct = uniform(rng, 0.0, 1.0) < success ? 1 : 0;
            seq.items.push_back({exercise, correct, t});
            for (int k : catalog[exercise].concepts)
                mastery[k] += cfg.gain * (1.0 - mastery[k]);
        }
        for (int k = 0; k < M; ++k) final_m(s, k) = mastery[k];
    }

    SyntheticResult out;
    // ids are zero-padded, so generation order equals the dataset's sorted order
    out.dataset = Dataset(std::move(catalog), std::move(students), M);
    out.initial_mastery = std::move(initial);
    out.final_mastery = std::move(final_m);
    return out;
}

}  // namespace nr4der::datamodel
