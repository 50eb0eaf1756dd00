#ifndef NR4DER_EVALKIT_HPP
#define NR4DER_EVALKIT_HPP

#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "nr4der/filter.hpp"

namespace nr4der::evalkit {

using datamodel::Dataset;
using datamodel::LongTailSplit;

// Binary-gain NDCG: gain 1 for relevant items, discount 1/log2(rank+1),
// ranks starting at 1, normalized by the ideal DCG. 0 when nothing is
// relevant.
double ndcg_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& relevant,
                 int k);
double recall_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& relevant,
                   int k);
double precision_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& relevant,
                      int k);
double f1_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& relevant, int k);

// Number of distinct knowledge concepts covered by the exercises.
double div_count(const std::vector<int>& exercises, const Dataset& ds);

// Baseline orderings over a candidate set.
std::vector<int> weight_order_ranking(const filter::CandidateSet& cs);
std::vector<int> random_ranking(const filter::CandidateSet& cs, std::mt19937_64& rng);
// Greedy concept-coverage maximization; ties by ascending exercise index.
std::vector<int> greedy_coverage_ranking(const filter::CandidateSet& cs, const Dataset& ds);

// Held-out relevance: the exercises each student actually attempted in the
// test window, aligned with `students` indices (empty set when the student
// has no test rows).
std::vector<std::unordered_set<int>> relevance_from_test(const Dataset& students,
                                                         const Dataset& test);

struct GroupStats {
    double sum = 0.0;
    int count = 0;
    double mean() const { return count ? sum / count : 0.0; }
};

// Mean metric values per (group, method, metric, K). Students with an empty
// relevant set are excluded from NDCG/Recall/F1 means and counted in
// `students_without_relevance`; DIV averages over every ranked student.
class MetricReport {
public:
    std::vector<int> ks;
    std::vector<std::string> methods;
    std::vector<std::string> groups{"overall", "active", "inactive"};
    // key: group|method|metric|k
    std::map<std::string, GroupStats> cells;
    int students_without_relevance = 0;

    static std::string key(const std::string& group, const std::string& method,
                           const std::string& metric, int k);
    double value(const std::string& group, const std::string& method,
                 const std::string& metric, int k) const;

    void write_csv(const std::string& path) const;
    // Fig. 4 style diversity-vs-K curve, one row per method and K.
    void write_div_curve_csv(const std::string& path) const;
    std::string to_text() const;
};

// Rankings: method name -> per-student ranked exercise indices (aligned with
// `students`). Per-student metrics are computed in parallel; the reduction
// into group means is serial and deterministic.
MetricReport evaluate(const std::map<std::string, std::vector<std::vector<int>>>& rankings,
                      const std::vector<std::unordered_set<int>>& relevant,
                      const Dataset& students, const LongTailSplit& split,
                      const std::vector<int>& ks);

}  // namespace nr4der::evalkit

#endif
