#include "nr4der/filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace nr4der::filter {

double exercise_difficulty(const MasteryVector& mastery, const Exercise& e) {
    if (e.concepts.empty()) throw ShapeError("exercise_difficulty: exercise covers no concept");
    double prod = 1.0;
    for (int k : e.concepts) {
        const double p = mastery.at(static_cast<std::size_t>(k));
        if (p < 0.0 || p > 1.0)
            throw NumericError("exercise_difficulty: mastery outside [0,1]");
        prod *= p;
    }
    return 1.0 - prod;
}

double exercise_weight(double delta, double difficulty) {
    return std::fabs(delta - difficulty);
}

std::vector<std::uint8_t> solved_mask(const InteractionSequence& seq, int exercise_count) {
    std::vector<std::uint8_t> mask(exercise_count, 0);
    for (const auto& it : seq.items)
        if (it.correct) mask[it.exercise] = 1;
    return mask;
}

CandidateSet build_candidate_set(int student_index, const MasteryVector& mastery,
                                 const Dataset& ds, double delta, int capacity,
                                 const std::vector<std::uint8_t>* exclude) {
    if (capacity < 1) throw ConfigError("build_candidate_set: capacity must be >= 1");
    if (ds.exercise_count() == 0) throw ConfigError("build_candidate_set: empty catalog");
    CandidateSet out;
    out.student = student_index;
    out.capacity = capacity;

    std::vector<WeightedExercise> all;
    all.reserve(ds.exercise_count());
    for (int e = 0; e < ds.exercise_count(); ++e) {
        if (exclude && (*exclude)[e]) continue;
        const double d = exercise_difficulty(mastery, ds.exercise(e));
        all.push_back({e, exercise_weight(delta, d), d});
    }
    std::sort(all.begin(), all.end(), [](const WeightedExercise& a, const WeightedExercise& b) {
        if (a.weight != b.weight) return a.weight < b.weight;
        return a.exercise < b.exercise;
    });
    if (capacity >= static_cast<int>(all.size())) {
        out.capacity_exceeds_catalog = capacity > static_cast<int>(all.size());
        out.exercises = std::move(all);
    } else {
        out.exercises.assign(all.begin(), all.begin() + capacity);
    }
    return out;
}

std::vector<CandidateSet> build_candidate_sets_serial(
    const Dataset& ds, const std::vector<MasteryVector>& masteries, double delta, int capacity,
    bool exclude_correct) {
    if (static_cast<int>(masteries.size()) != ds.student_count())
        throw ShapeError("build_candidate_sets: one mastery vector per student required");
    std::vector<CandidateSet> out(masteries.size());
    for (int s = 0; s < ds.student_count(); ++s) {
        std::vector<std::uint8_t> mask;
        if (exclude_correct) mask = solved_mask(ds.student(s), ds.exercise_count());
        out[s] = build_candidate_set(s, masteries[s], ds, delta, capacity,
                                     exclude_correct ? &mask : nullptr);
    }
    return out;
}

std::vector<CandidateSet> build_candidate_sets(const Dataset& ds,
                                               const std::vector<MasteryVector>& masteries,
                                               double delta, int capacity,
                                               bool exclude_correct) {
    if (static_cast<int>(masteries.size()) != ds.student_count())
        throw ShapeError("build_candidate_sets: one mastery vector per student required");
    std::vector<CandidateSet> out(masteries.size());
    const int n = ds.student_count();
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < n; ++s) {
        std::vector<std::uint8_t> mask;
        if (exclude_correct) mask = solved_mask(ds.student(s), ds.exercise_count());
        out[s] = build_candidate_set(s, masteries[s], ds, delta, capacity,
                                     exclude_correct ? &mask : nullptr);
    }
    return out;
}

void write_candidates_csv(const std::vector<CandidateSet>& sets, const Dataset& ds,
                          const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write candidates: " + path);
    out << "student_id,rank,exercise_id,weight,difficulty\n";
    char buf[64];
    for (const CandidateSet& cs : sets) {
        for (std::size_t r = 0; r < cs.exercises.size(); ++r) {
            const WeightedExercise& we = cs.exercises[r];
            out << ds.student(cs.student).student_id << "," << (r + 1) << ","
                << ds.exercise(we.exercise).id << ",";
            std::snprintf(buf, sizeof(buf), "%.9g,%.9g", we.weight, we.difficulty);
            out << buf << "\n";
        }
    }
}

}  // namespace nr4der::filter
