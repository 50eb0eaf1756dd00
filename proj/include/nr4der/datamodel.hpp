#ifndef NR4DER_DATAMODEL_HPP
#define NR4DER_DATAMODEL_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "nr4der/common.hpp"

namespace nr4der::datamodel {

// One answered exercise. `exercise` indexes the catalog; `position` is the
// global ordinal within the student's full sequence and survives splitting.
struct Interaction {
    int exercise = -1;
    int correct = 0;  // 0 or 1
    int position = 0;
};

struct InteractionSequence {
    std::string student_id;
    std::vector<Interaction> items;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

// An exercise and the knowledge concepts it covers (binary coverage of
// length M, at least one bit set).
struct Exercise {
    std::string id;
    std::vector<std::uint8_t> coverage;
    std::vector<int> concepts;  // sorted indices of set bits
};

// Immutable after construction. Students and exercises are kept sorted by id
// so every index-based iteration is deterministic.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Exercise> catalog, std::vector<InteractionSequence> students,
            int concept_count);

    int concept_count() const { return concept_count_; }
    int exercise_count() const { return static_cast<int>(catalog_.size()); }
    int student_count() const { return static_cast<int>(students_.size()); }
    std::size_t interaction_count() const;

    const std::vector<Exercise>& catalog() const { return catalog_; }
    const std::vector<InteractionSequence>& students() const { return students_; }
    const Exercise& exercise(int index) const { return catalog_.at(index); }
    const InteractionSequence& student(int index) const { return students_.at(index); }

    int exercise_index(const std::string& id) const;  // -1 when absent
    int student_index(const std::string& id) const;

private:
    void validate() const;
    std::vector<Exercise> catalog_;
    std::vector<InteractionSequence> students_;
    std::unordered_map<std::string, int> exercise_by_id_;
    std::unordered_map<std::string, int> student_by_id_;
    int concept_count_ = 0;
};

// Partition of students into the most-active head and the long tail.
struct LongTailSplit {
    std::vector<int> active;    // student indices, sorted
    std::vector<int> inactive;  // student indices, sorted
    double active_fraction = 0.05;
    std::vector<std::uint8_t> is_active;  // indexed by student

    bool active_student(int index) const { return is_active[index] != 0; }
};

struct TrainTestSplit {
    Dataset train;
    Dataset test;
    // Students whose sequences were too short to donate a test item.
    std::vector<std::string> skipped_students;
};

// Interaction log CSV: header student_id,exercise_id,correct[,timestamp].
// Concept map CSV: header exercise_id,concept_ids with semicolon-separated
// zero-based concept indices.
Dataset ingest_interactions(std::istream& log, std::istream& concept_map);
Dataset ingest_files(const std::string& log_path, const std::string& concepts_path);

// Canonical re-export of the two CSVs; ingesting them again reproduces the
// dataset exactly.
void write_dataset(const Dataset& ds, const std::string& log_path,
                   const std::string& concepts_path);

LongTailSplit partition_students(const Dataset& ds, double active_fraction);

// Per-student temporal split: the earliest train_ratio of each sequence goes
// to train, the remainder to test. Test side is floored but gets at least one
// interaction when the student has two or more; single-interaction students
// go wholly to train and are reported as skipped.
TrainTestSplit split_train_test(const Dataset& ds, double train_ratio);

InteractionSequence truncate_sequence(const InteractionSequence& seq, int keep);

}  // namespace nr4der::datamodel

#endif
