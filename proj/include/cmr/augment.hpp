#pragma once

#include <vector>

#include "cmr/triplet.hpp"

namespace cmr {

// Output of one interpolation between same-class points x_i and x_j:
// points[k-1] = (k*x_i + (gamma-k)*x_j) / gamma for k = 1..gamma, kept both
// as generated and after L2 normalization. k = gamma reproduces x_i; that
// duplicated endpoint is intentional.
struct SyntheticPointSet {
    int source_i = 0;
    int source_j = 0;
    Modality modality = Modality::Audio;
    int gamma = 0;
    std::vector<std::vector<double>> prenorm;  // raw interpolants
    std::vector<std::vector<double>> points;   // normalized (or raw if degenerate)
    std::vector<double> prenorm_norms;
    std::vector<bool> degenerate;
    bool normalized = false;
};

// Interpolates gamma synthetic points between two same-class embeddings and
// L2-normalizes each. gamma = 0 yields an empty set (augmentation off).
// Throws DataError when the labels differ.
SyntheticPointSet interpolate(std::span<const double> x_i,
                              std::span<const double> x_j, int label_i,
                              int label_j, int gamma,
                              Modality modality = Modality::Audio,
                              int source_i = 0, int source_j = 0);

struct PairingPolicy {
    // All same-class pairs are interpolated, but no more than this many pairs
    // per class; beyond it a seeded subsample keeps the cost bounded.
    std::size_t max_pairs_per_class = 16;
};

// Real batch plus per-modality synthetic points carrying inherited labels.
// Synthetic points never anchor a triplet.
struct AugmentedBatch {
    const Matrix* audio = nullptr;
    const Matrix* visual = nullptr;
    std::vector<int> labels;
    std::vector<SyntheticPoint> audio_synthetic;
    std::vector<SyntheticPoint> visual_synthetic;
    int skipped_single_member_classes = 0;  // advisory

    EmbeddingContext context() const;
};

// Generates synthetic points for one modality: every selected same-class
// pair contributes gamma interpolants. Classes with a single member are
// skipped (counted in the advisory field of the batch).
std::vector<SyntheticPoint> augment_class(const Matrix& embeddings,
                                          const std::vector<int>& labels,
                                          Modality modality, int gamma,
                                          const PairingPolicy& policy, Rng& rng,
                                          int* skipped_classes = nullptr);

// Convenience: augments both modalities of a batch.
AugmentedBatch augment_batch(const Matrix& audio_emb, const Matrix& visual_emb,
                             const std::vector<int>& labels, int gamma,
                             const PairingPolicy& policy, Rng& rng);

// Hard-triplet mining over real + synthetic points. Anchors stay real;
// positives and negatives may be synthetic. gamma = 0 reduces to plain hard
// mining bit-for-bit.
MiningResult mine_hard_augmented(const AugmentedBatch& batch, double margin);

}  // namespace cmr
