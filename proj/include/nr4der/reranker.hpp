#ifndef NR4DER_RERANKER_HPP
#define NR4DER_RERANKER_HPP

#include <optional>

#include "nr4der/attention.hpp"
#include "nr4der/filter.hpp"
#include "nr4der/layers.hpp"
#include "nr4der/lstm.hpp"

namespace nr4der::reranker {

using datamodel::Dataset;
using datamodel::InteractionSequence;
using datamodel::LongTailSplit;
using tensorkit::Matrix;
using tensorkit::ParameterSet;
using tensorkit::Vector;

enum class ScoreMode { Deterministic, Probabilistic };

std::string to_string(ScoreMode mode);
ScoreMode score_mode_from_string(const std::string& s);

// Interaction (e, a) joins the subsequence of every concept e covers,
// preserving relative order; unpracticed concepts yield empty subsequences.
std::vector<InteractionSequence> split_by_concept(const InteractionSequence& seq,
                                                  const Dataset& ds);

// Probabilistic coverage b_k(C) = 1 - prod_{e in C} (1 - tau_e^k). With the
// binary coverage bits this is "does any exercise cover k"; the general form
// accepts fractional tau rows.
Vector coverage(const std::vector<int>& exercises, const Dataset& ds);
Vector coverage_general(const std::vector<Vector>& tau_rows, int concept_count);

// d(C_l) = b(C) - b(C \ {C_l}), entries in [0,1].
Vector marginal_diversity(const std::vector<int>& exercises, std::size_t index,
                          const Dataset& ds);
// All candidates at once, rows = candidates. Serial and OpenMP variants are
// bit-identical.
Matrix marginal_diversity_all(const std::vector<int>& exercises, const Dataset& ds);
Matrix marginal_diversity_all_serial(const std::vector<int>& exercises, const Dataset& ds);

// Hadamard product of the pace distribution with a marginal-diversity vector.
Vector diversity_gain(const Vector& omega, const Vector& marginal);

// Listwise cross-entropy, scores clamped to [1e-12, 1 - 1e-12].
double rerank_loss(const Vector& scores, const std::vector<int>& labels);
Vector rerank_loss_grad(const Vector& scores, const std::vector<int>& labels);

// Descending-score order with ascending exercise-id tie-break; invariant
// under positive affine transformations of the scores.
std::vector<std::size_t> rank_descending(const Vector& scores,
                                         const std::vector<int>& exercises);

struct ScoredExercise {
    int exercise = -1;
    double score = 0.0;
};

struct RerankOutput {
    int student = -1;
    std::vector<ScoredExercise> items;  // scores non-increasing
    ScoreMode mode = ScoreMode::Deterministic;
    int k = 0;
};

struct RerankConfig {
    std::size_t q_s = 32;  // student feature width
    std::size_t q_e = 32;  // exercise embedding width
    std::size_t q_h = 64;  // recurrent hidden width
    std::size_t heads = 4;
    std::size_t context_dim = 16;  // width of the upstream student representation
    int epochs = 15;
    int batch_size = 32;
    double learning_rate = 0.001;
    double tail_fraction = 0.2;  // share of the training sequence held back for labels
    std::uint64_t seed = 42;

    void validate() const;
};

// One student's list to score: candidates in ascending filter-weight order
// plus everything the heads condition on.
struct ListInstance {
    int student = -1;
    std::vector<int> candidates;
    Vector hplus;                // upstream student representation (frozen)
    InteractionSequence history; // drives the pace distribution
    std::vector<int> labels;     // training only; 1 = not mastered
};

struct ScoreBundle {
    Vector deterministic;  // sigmoid scores
    Vector mu;
    Vector sigma;          // softplus, >= 0
    Vector omega;          // pace distribution, in [0,1]^M
    Matrix diversity;      // L x M marginal diversity
};

struct EpochLog {
    int epoch = 0;
    double loss_det = 0.0;
    double loss_prob = 0.0;
};

// Neural re-ranker: a Bi-LSTM listwise relevance context fused with
// pace-weighted marginal diversity, scored by a deterministic sigmoid head
// and by mean/spread heads for UCB inference. Both heads train jointly on
// the listwise cross-entropy.
class RerankModel {
public:
    RerankModel() = default;
    RerankModel(const RerankConfig& cfg, int exercise_count, int concept_count,
                bool init_params = true);
    static RerankModel load(const std::string& path);
    void save(const std::string& path) const;

    bool ready() const { return !params_.empty(); }
    const RerankConfig& config() const { return cfg_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    // Scores every candidate. xi (standard-normal, one per candidate) adds
    // the reparameterized probabilistic sample mu + xi*sigma during training;
    // zero_diversity feeds a zeroed diversity matrix to the heads.
    ScoreBundle score(const ListInstance& inst, const Dataset& ds,
                      const Vector* xi = nullptr, bool zero_diversity = false) const;

    // Top-k list for one student. Probabilistic mode ranks by the upper
    // confidence bound mu + sigma; no sampling happens at inference.
    RerankOutput rerank(const ListInstance& inst, const Dataset& ds, int k, ScoreMode mode,
                        bool zero_diversity = false) const;

    // Listwise cross-entropy of both heads summed over the instances.
    // xi_rows supplies the per-candidate reparameterization noise, one row
    // per instance; with_grads accumulates analytic gradients (scaled by
    // grad_scale) into the parameter buffers, which callers zero first.
    // zero_diversity trains the relevance-only ablation arm.
    double training_pass(const std::vector<ListInstance>& instances, const Dataset& ds,
                         const std::vector<Vector>& xi_rows, bool with_grads,
                         double grad_scale = 1.0, double* loss_det_out = nullptr,
                         double* loss_prob_out = nullptr, bool zero_diversity = false);

    std::size_t relevance_width() const { return 2 * cfg_.q_h; }

private:
    struct Forward {
        std::vector<int> candidates;
        std::vector<Vector> e_rows;
        tensorkit::BiLstm::Cache relevance;
        std::vector<Vector> H;
        std::vector<InteractionSequence> concept_seqs;
        std::vector<std::optional<tensorkit::Lstm::Cache>> pace_caches;
        Matrix pace_rows;  // M x q_h
        tensorkit::SelfAttention::Cache attn;
        Matrix attn_out;
        std::vector<tensorkit::Mlp::Cache> pace_mlp;
        Vector omega;
        Matrix diversity;  // raw marginal diversity, L x M
        bool zero_diversity = false;
        std::vector<Vector> v_rows;
        std::vector<tensorkit::Mlp::Cache> det_caches, mu_caches, sigma_caches;
        ScoreBundle scores;
        Vector xi;
        Vector xs;
        Vector hplus;
    };

    ScoreBundle score_impl(const ListInstance& inst, const Dataset& ds, const Vector* xi,
                           bool zero_diversity, Forward* cache) const;
    void backward(const Forward& cache, const Dataset& ds, const Vector& d_det,
                  const Vector& d_prob);

    RerankConfig cfg_;
    int exercises_ = 0;
    int concepts_ = 0;
    ParameterSet params_;
    std::optional<tensorkit::DenseLayer> student_proj_;
    std::optional<tensorkit::BiLstm> relevance_;
    std::optional<tensorkit::Lstm> pace_lstm_;
    std::optional<tensorkit::SelfAttention> pace_attn_;
    std::optional<tensorkit::Mlp> pace_mlp_;
    std::optional<tensorkit::Mlp> det_head_;
    std::optional<tensorkit::Mlp> mu_head_;
    std::optional<tensorkit::Mlp> sigma_head_;

    void build_layers();
};

struct TrainOutput {
    RerankModel model;
    std::vector<EpochLog> log;
};

// Mini-batch Adam over per-student list instances; deterministic given
// cfg.seed (the reparameterization noise comes from a seeded generator).
TrainOutput train_reranker(const std::vector<ListInstance>& instances, const Dataset& ds,
                           const RerankConfig& cfg);

// CSV export: student_id,rank,exercise_id,score,mode.
void write_rerank_csv(const std::vector<RerankOutput>& outputs, const Dataset& ds,
                      const std::string& path);

}  // namespace nr4der::reranker

#endif
