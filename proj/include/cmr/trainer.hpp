#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmr/augment.hpp"
#include "cmr/dataset.hpp"
#include "cmr/eval.hpp"
#include "cmr/network.hpp"
#include "cmr/optimizer.hpp"

namespace cmr {

// What the per-epoch triplet term is built from.
enum class StageSelector {
    SemiHard,       // semi-hard triplets over the real batch
    HardAugmented,  // hard triplets over the augmented embedding space
    AllCategories,  // every triplet, no category filter
};

enum class AblationMode { SemiOnly, HardOnly, SemiToHard, HardToSemi, HardToAll };

struct TrainConfig {
    double margin = 0.2;
    int gamma = 2;
    int total_epochs = 200;
    // 0 picks the default of total_epochs / 2.
    int stage_switch_epoch = 0;
    std::size_t batch_size = 400;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::uint64_t seed = 7;
    int eval_every = 10;
    bool augmentation_enabled = true;
    bool gradient_flow_through_synthetics = false;
    double triplet_weight = 1.0;
    std::size_t hidden_dim = 64;
    std::size_t num_hidden_layers = 3;
    std::size_t max_pairs_per_class = 16;
    bool reset_optimizer_at_switch = false;
    Similarity eval_similarity = Similarity::NegEuclidean;

    int effective_switch_epoch() const {
        return stage_switch_epoch > 0 ? stage_switch_epoch : total_epochs / 2;
    }

    void validate() const;  // throws UsageError on bad values
};

struct EpochRecord {
    int epoch = 0;
    int stage = 1;
    double label_loss = 0.0;
    double triplet_loss = 0.0;
    double total_loss = 0.0;
    long n_easy = 0;
    long n_semihard = 0;
    long n_hard = 0;
    std::optional<double> map_a2v;
    std::optional<double> map_v2a;
    std::optional<double> map_avg;
};

struct MetricsLog {
    std::vector<EpochRecord> rows;
    std::vector<std::string> advisories;
};

struct EpochStats {
    double label_loss = 0.0;
    double triplet_loss = 0.0;
    double total_loss = 0.0;
    CategoryCounts counts;       // census of the space mined this epoch
    long mined_triplets = 0;     // triplets fed to the loss
    int degenerate_batches = 0;  // batches with < 2 classes
    int batches = 0;
};

// One pass over the training data: per batch, project both modalities,
// label loss on both, mine triplets per the selector, combined loss,
// backprop, optimizer step.
EpochStats train_epoch(ModelPair& models, const DataView& train,
                       StageSelector selector, const TrainConfig& cfg,
                       OptimizerState& opt, Rng& rng, int epoch_number);

struct TrainResult {
    ModelPair models;
    MetricsLog log;
    // Model state right at the stage-1 -> stage-2 transition (two-phase
    // modes only).
    std::optional<ModelPair> stage_boundary_snapshot;
};

// The two-stage curriculum: semi-hard triplets until the switch epoch, hard
// triplets mined in the augmented space afterwards. Test-split MAP is
// evaluated every eval_every epochs and at the final epoch.
TrainResult run_curriculum(const PairedDataset& data, const TrainConfig& cfg);

// Same loop with the per-stage selector schedule replaced by the mode.
// SemiToHard reproduces run_curriculum bit-for-bit.
TrainResult run_ablation(const PairedDataset& data, const TrainConfig& cfg,
                         AblationMode mode);

// Runs the curriculum once per gamma value and reports the final test MAP.
struct GammaSweepRow {
    int gamma = 0;
    double map_a2v = 0.0;
    double map_v2a = 0.0;
    double map_avg = 0.0;
};

std::vector<GammaSweepRow> run_gamma_sweep(const PairedDataset& data,
                                           TrainConfig cfg,
                                           const std::vector<int>& gammas);

// Combined label + triplet objective over a fixed batch and a triplet list
// frozen at the current parameters — the function one optimizer step
// actually descends. Used by the gradient verifier: value() is a pure
// re-evaluation at (possibly perturbed) parameters, accumulate_grads() runs
// the analytic backward pass.
//
// Synthetic candidates referenced by the triplet list are frozen constants
// by default; with grad_through_synthetics they are regenerated from the
// live embeddings on every evaluation so the interpolation chain is part of
// the checked function.
struct CombinedLossBatch {
    Matrix audio_features;
    Matrix visual_features;
    std::vector<int> labels;
    std::vector<Triplet> triplets;
    double margin = 0.2;
    double triplet_weight = 1.0;
    int gamma = 0;
    std::size_t max_pairs_per_class = 16;
    std::uint64_t aug_seed = 0;
    bool grad_through_synthetics = false;
    std::vector<SyntheticPoint> frozen_audio_syn;
    std::vector<SyntheticPoint> frozen_visual_syn;
};

// Mines triplets (and synthetics, for HardAugmented) at the current
// parameters and freezes them into a CombinedLossBatch.
CombinedLossBatch make_combined_batch(const ModelPair& models,
                                      const Matrix& audio_features,
                                      const Matrix& visual_features,
                                      const std::vector<int>& labels,
                                      const TrainConfig& cfg,
                                      StageSelector selector);

double combined_loss_value(const ModelPair& models,
                           const CombinedLossBatch& batch);

// Zeroes and fills the models' parameter gradients; returns the loss.
double combined_loss_grads(ModelPair& models, const CombinedLossBatch& batch);

// Metrics CSV in the pinned column order, preceded by `# key=value` echo
// lines. MAP cells are empty on epochs without an evaluation.
void write_metrics_csv(
    const std::string& path, const MetricsLog& log,
    const std::vector<std::pair<std::string, std::string>>& config_echo);

const char* to_string(AblationMode mode);
std::optional<AblationMode> ablation_mode_from_string(const std::string& name);

}  // namespace cmr
