#ifndef NR4DER_KCMP_HPP
#define NR4DER_KCMP_HPP

#include <optional>

#include "nr4der/enhancer.hpp"
#include "nr4der/mlstm.hpp"

namespace nr4der::kcmp {

using datamodel::Dataset;
using datamodel::InteractionSequence;
using datamodel::LongTailSplit;
using tensorkit::Matrix;
using tensorkit::ParameterSet;
using tensorkit::Vector;

// Per-concept success probabilities, length M, entries in [0, 1].
using MasteryVector = Vector;

struct KcmpConfig {
    std::size_t dim = 16;      // mLSTM head dimension and encoder output dimension
    std::size_t emb_dim = 16;  // encoder exercise-embedding width
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.001;
    double lambda_s = 0.5;  // weight of the enhancer reconstruction loss
    double beta = 0.8;      // share of the original representation kept on enhancement
    int truncation = 10;    // T, most recent interactions fed to the encoder during training
    bool enhancer_enabled = true;
    std::uint64_t seed = 42;

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    double loss_total = 0.0;
    double loss_k = 0.0;
    double loss_s = 0.0;
};

// One prediction target: the concepts covered by the answered exercise and
// whether the answer was correct.
struct StepTarget {
    std::vector<int> concepts;
    int correct = 0;
};

// Mean binary cross-entropy over all students and steps, normalized by the
// total number of target steps. Multi-concept targets average the BCE over
// the covered concepts. Probabilities are clamped to [1e-12, 1 - 1e-12].
double kcmp_loss(const std::vector<std::vector<Vector>>& predictions,
                 const std::vector<std::vector<StepTarget>>& targets);

// lambda_s * sum of enhancer losses + knowledge-tracing loss.
double total_loss(double enhancer_loss_sum, double kcmp_loss_value, double lambda_s);

// Unit-sum concept share of an exercise crossed with the correctness flag:
// [tau_hat * a ; tau_hat * (1 - a)], length 2M.
Vector interaction_token(const datamodel::Exercise& e, int correct, int concept_count);

struct TrainOutput;
class KcmpModel;
TrainOutput train_kcmp(const Dataset& train, const LongTailSplit& split, const KcmpConfig& cfg);

// mLSTM knowledge-concept mastery predictor with the student-representation
// enhancer. The enhanced representation enters the recurrence as a projected
// context token ahead of the interaction stream, so per-step predictions are
// conditioned on it from the first step.
class KcmpModel {
public:
    KcmpModel() = default;
    KcmpModel(const KcmpConfig& cfg, int exercise_count, int concept_count,
              bool init_params = true);
    static KcmpModel load(const std::string& path);
    void save(const std::string& path) const;

    bool ready() const { return !params_.empty(); }
    int concept_count() const { return concepts_; }
    int exercise_count() const { return exercises_; }
    const KcmpConfig& config() const { return cfg_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    // Eq. 4 + Eq. 7 at inference: encode the complete sequence; inactive
    // students get the generated completion added.
    Vector enhanced_representation(const InteractionSequence& seq, bool active) const;

    // Per-concept mastery after consuming the whole history.
    MasteryVector predict_mastery(const Vector& hplus, const InteractionSequence& history,
                                  const Dataset& ds) const;

    // predictions[t] is emitted before interaction t is consumed; length ==
    // history length. Used for the training loss and next-answer evaluation.
    std::vector<Vector> per_step_predictions(const Vector& hplus,
                                             const InteractionSequence& history,
                                             const Dataset& ds) const;

    // Batch mastery prediction across students; the OpenMP kernel and the
    // serial reference produce bit-identical results.
    std::vector<MasteryVector> predict_all(const Dataset& ds, const LongTailSplit& split) const;
    std::vector<MasteryVector> predict_all_serial(const Dataset& ds,
                                                  const LongTailSplit& split) const;

    struct PassStats {
        double bce_sum = 0.0;       // summed per-step BCE before normalization
        std::size_t steps = 0;      // total prediction steps
        double enhancer_sum = 0.0;  // sum of reconstruction losses over actives
    };

    // Joint objective over the given students at the stated epoch:
    // lambda_s * sum(L_s) + mean BCE. With with_grads the analytic gradients
    // are accumulated into the parameter grad buffers (callers zero them).
    // Reconstruction targets are the fresh full-history encodings, detached;
    // fixed_targets (indexed like `students`) pins them instead, which makes
    // the objective an ordinary function of the parameters for gradient
    // checking.
    double joint_pass(const Dataset& ds, const LongTailSplit& split,
                      const std::vector<int>& students, int epoch, int len_min, int len_max,
                      bool with_grads, PassStats* stats = nullptr,
                      const std::vector<Vector>* fixed_targets = nullptr);

    const enhancer::SequenceEncoder& encoder() const { return *encoder_; }
    const enhancer::Generator& generator() const { return *generator_; }
    const tensorkit::MlstmLayer& recurrence() const { return *mlstm_; }

private:
    KcmpConfig cfg_;
    int exercises_ = 0;
    int concepts_ = 0;
    ParameterSet params_;
    std::optional<enhancer::SequenceEncoder> encoder_;
    std::optional<enhancer::Generator> generator_;
    std::optional<tensorkit::DenseLayer> context_;
    std::optional<tensorkit::MlstmLayer> mlstm_;
    std::optional<tensorkit::DenseLayer> head_;

    void build_layers();
};

// Result of train_kcmp: mini-batch Adam on the joint objective, deterministic
// given cfg.seed. Training throws NumericError naming the epoch if the loss
// stops being finite.
struct TrainOutput {
    KcmpModel model;
    std::vector<EpochLog> log;
};

}  // namespace nr4der::kcmp

#endif
