#ifndef NR4DER_FILTER_HPP
#define NR4DER_FILTER_HPP

#include "nr4der/datamodel.hpp"
#include "nr4der/kcmp.hpp"

namespace nr4der::filter {

using datamodel::Dataset;
using datamodel::Exercise;
using datamodel::InteractionSequence;
using kcmp::MasteryVector;

struct WeightedExercise {
    int exercise = -1;
    double weight = 0.0;
    double difficulty = 0.0;
};

// The capacity-L lowest-weight exercises for one student, ascending by
// weight with exercise-id tie-break.
struct CandidateSet {
    int student = -1;
    std::vector<WeightedExercise> exercises;
    int capacity = 0;
    bool capacity_exceeds_catalog = false;

    std::size_t size() const { return exercises.size(); }
};

// 1 - product of mastery over the exercise's covered concepts.
double exercise_difficulty(const MasteryVector& mastery, const Exercise& e);

// |delta - difficulty|.
double exercise_weight(double delta, double difficulty);

// Exercises the student has already answered correctly (by exercise index).
std::vector<std::uint8_t> solved_mask(const InteractionSequence& seq, int exercise_count);

// Weighs every exercise (minus exclusions), sorts ascending and keeps the
// first `capacity`. Asking for more than the catalog yields the whole catalog
// with the flag set.
CandidateSet build_candidate_set(int student_index, const MasteryVector& mastery,
                                 const Dataset& ds, double delta, int capacity,
                                 const std::vector<std::uint8_t>* exclude = nullptr);

// Per-student candidate sets over a whole dataset. Both versions produce
// bit-identical results; the parallel one fans out across students.
std::vector<CandidateSet> build_candidate_sets(const Dataset& ds,
                                               const std::vector<MasteryVector>& masteries,
                                               double delta, int capacity,
                                               bool exclude_correct);
std::vector<CandidateSet> build_candidate_sets_serial(const Dataset& ds,
                                                      const std::vector<MasteryVector>& masteries,
                                                      double delta, int capacity,
                                                      bool exclude_correct);

// CSV export: student_id,rank,exercise_id,weight,difficulty.
void write_candidates_csv(const std::vector<CandidateSet>& sets, const Dataset& ds,
                          const std::string& path);

}  // namespace nr4der::filter

#endif
