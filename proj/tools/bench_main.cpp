// Benchmark of the OpenMP kernels against their serial reference
// implementations: batch mastery prediction, candidate-set construction and
// marginal-diversity computation. Both sides compute identical results; this
// reports wall-clock and speedup.

#include <chrono>
#include <cstdio>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "nr4der/filter.hpp"
#include "nr4der/kcmp.hpp"
#include "nr4der/reranker.hpp"
#include "nr4der/synthetic.hpp"

using namespace nr4der;

namespace {

double time_of(const std::function<void()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(const char* name, double serial, double parallel) {
    std::printf("%-28s serial %8.3fs   parallel %8.3fs   speedup %.2fx\n", name, serial,
                parallel, parallel > 0 ? serial / parallel : 0.0);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled; both columns run serially\n");
#endif

    datamodel::SyntheticConfig scfg;
    scfg.students = 1500;
    scfg.concepts = 24;
    scfg.exercises = 400;
    scfg.max_length = 120;
    scfg.min_length = 6;
    scfg.seed = 7;
    auto synth = datamodel::generate_synthetic(scfg);
    const datamodel::Dataset& ds = synth.dataset;
    auto lt = datamodel::partition_students(ds, 0.05);
    std::printf("workload: %d students, %zu interactions, %d exercises, %d concepts\n",
                ds.student_count(), ds.interaction_count(), ds.exercise_count(),
                ds.concept_count());

    kcmp::KcmpConfig kcfg;
    kcfg.dim = 16;
    kcfg.emb_dim = 16;
    kcmp::KcmpModel model(kcfg, ds.exercise_count(), ds.concept_count());

    std::vector<kcmp::MasteryVector> masteries;
    const double t_pred_serial = time_of([&] { masteries = model.predict_all_serial(ds, lt); });
    std::vector<kcmp::MasteryVector> masteries_p;
    const double t_pred_parallel = time_of([&] { masteries_p = model.predict_all(ds, lt); });
    report("mastery prediction", t_pred_serial, t_pred_parallel);
    if (masteries != masteries_p) {
        std::printf("MISMATCH between serial and parallel mastery prediction\n");
        return 1;
    }

    std::vector<filter::CandidateSet> sets;
    const double t_cand_serial = time_of(
        [&] { sets = filter::build_candidate_sets_serial(ds, masteries, 0.7, 50, true); });
    std::vector<filter::CandidateSet> sets_p;
    const double t_cand_parallel =
        time_of([&] { sets_p = filter::build_candidate_sets(ds, masteries, 0.7, 50, true); });
    report("candidate sets", t_cand_serial, t_cand_parallel);
    for (std::size_t s = 0; s < sets.size(); ++s)
        for (std::size_t i = 0; i < sets[s].exercises.size(); ++i)
            if (sets[s].exercises[i].exercise != sets_p[s].exercises[i].exercise ||
                sets[s].exercises[i].weight != sets_p[s].exercises[i].weight) {
                std::printf("MISMATCH between serial and parallel candidate sets\n");
                return 1;
            }

    // diversity over a large candidate list
    std::vector<int> big_list;
    for (int e = 0; e < ds.exercise_count(); ++e) big_list.push_back(e);
    tensorkit::Matrix d_serial(0, 0), d_parallel(0, 0);
    double t_div_serial = 0.0, t_div_parallel = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        t_div_serial +=
            time_of([&] { d_serial = reranker::marginal_diversity_all_serial(big_list, ds); });
        t_div_parallel +=
            time_of([&] { d_parallel = reranker::marginal_diversity_all(big_list, ds); });
    }
    report("marginal diversity", t_div_serial, t_div_parallel);
    if (d_serial.raw() != d_parallel.raw()) {
        std::printf("MISMATCH between serial and parallel marginal diversity\n");
        return 1;
    }

    std::printf("all kernel pairs agree bit-exactly\n");
    return 0;
}
