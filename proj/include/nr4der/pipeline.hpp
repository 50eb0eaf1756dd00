#ifndef NR4DER_PIPELINE_HPP
#define NR4DER_PIPELINE_HPP

#include "nr4der/config.hpp"
#include "nr4der/evalkit.hpp"

namespace nr4der::pipeline {

using config::RunConfig;
using datamodel::Dataset;
using datamodel::LongTailSplit;
using datamodel::TrainTestSplit;

struct SplitBundle {
    TrainTestSplit tt;
    LongTailSplit lt;  // computed over the training split
};

SplitBundle prepare_splits(const Dataset& full, const RunConfig& cfg);

struct TrainedPipeline {
    kcmp::KcmpModel mastery;
    reranker::RerankModel rerank;
    std::vector<kcmp::EpochLog> mastery_log;
    std::vector<reranker::EpochLog> rerank_log;
    bool has_reranker = false;
};

// Stage one (mastery + enhancer) then stage two (re-ranker) on frozen stage-
// one outputs. Re-ranker labels come from each student's held-back tail of
// the training sequence where available, else from predicted difficulty.
TrainedPipeline train_pipeline(const Dataset& train, const LongTailSplit& lt,
                               const RunConfig& cfg, bool train_rerank = true);

std::vector<reranker::ListInstance> build_training_instances(const Dataset& train,
                                                             const LongTailSplit& lt,
                                                             const kcmp::KcmpModel& model,
                                                             const RunConfig& cfg);

// Full-history instances for recommendation; candidate sets returned
// alongside when requested.
std::vector<reranker::ListInstance> build_inference_instances(
    const Dataset& train, const LongTailSplit& lt, const kcmp::KcmpModel& model,
    const RunConfig& cfg, std::vector<filter::CandidateSet>* sets_out = nullptr);

// Ranked exercise lists per method: rerank_det, rerank_ucb, rerank_nodiv
// (primary mode with the diversity features zeroed), filter_order,
// greedy_coverage, random. Students with empty candidate pools get empty
// lists.
std::map<std::string, std::vector<std::vector<int>>> build_rankings(
    const TrainedPipeline& models, const std::vector<reranker::ListInstance>& instances,
    const Dataset& train, const RunConfig& cfg);

evalkit::MetricReport run_evaluation(const TrainedPipeline& models, const Dataset& train,
                                     const Dataset& test, const LongTailSplit& lt,
                                     const RunConfig& cfg);

// Knowledge-tracing diagnostics on held-out data.
double next_answer_auc(const kcmp::KcmpModel& model, const Dataset& train, const Dataset& test,
                       const LongTailSplit& lt);
// Rank correlation between predicted mastery (after the full sequence) and
// the generator's latent mastery, pooled over students and concepts.
double mastery_spearman(const kcmp::KcmpModel& model, const Dataset& full,
                        const LongTailSplit& lt, const tensorkit::Matrix& latent);

// Command bodies shared by the CLI; each returns the files it wrote and
// drops a manifest in the output directory.
std::vector<std::string> cmd_ingest(const std::string& log_path,
                                    const std::string& concepts_path,
                                    const std::string& out_dir);
std::vector<std::string> cmd_synth(const RunConfig& cfg, const std::string& out_dir);
std::vector<std::string> cmd_train(const RunConfig& cfg, const std::string& data_dir,
                                   const std::string& out_dir, bool no_enhancer,
                                   bool no_rerank);
std::vector<std::string> cmd_recommend(const RunConfig& cfg, const std::string& data_dir,
                                       const std::string& models_dir,
                                       const std::string& out_dir);
std::vector<std::string> cmd_evaluate(const RunConfig& cfg, const std::string& data_dir,
                                      const std::string& models_dir,
                                      const std::string& recs_path,
                                      const std::string& out_dir);
std::vector<std::string> cmd_pipeline(const RunConfig& cfg, const std::string& out_dir);

}  // namespace nr4der::pipeline

#endif
