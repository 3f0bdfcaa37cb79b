#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cmr/matrix.hpp"

namespace cmr {

enum class Modality { Audio, Visual };

// A point in the embedding space: a row of a real batch, or an entry of a
// synthetic point list when `synthetic` is set.
struct PointRef {
    Modality modality = Modality::Audio;
    int index = 0;
    bool synthetic = false;

    bool operator==(const PointRef&) const = default;
};

enum class TripletCategory { Easy, SemiHard, Hard };

struct MarginConfig {
    double margin = 0.2;
};

// (anchor, positive, negative) with its distances and category. Anchor and
// positive share a class; the negative does not. Positive and negative are
// always from the opposite modality of the anchor.
struct Triplet {
    PointRef anchor;
    PointRef positive;
    PointRef negative;
    double d_ap = 0.0;
    double d_an = 0.0;
    TripletCategory category = TripletCategory::Easy;

    bool operator==(const Triplet&) const = default;
};

// Euclidean distance.
double distance(std::span<const double> x, std::span<const double> y);

// Category boundaries:
//   Easy      d_an > d_ap + margin
//   Hard      d_an < d_ap
//   SemiHard  d_ap <= d_an <= d_ap + margin   (ties land here)
TripletCategory classify_triplet(double d_ap, double d_an, double margin);

// One interpolated embedding, flattened out of its generating set. Carries
// enough provenance to route gradients back to its source rows when that
// mode is enabled.
struct SyntheticPoint {
    std::vector<double> value;  // normalized; used for all distance math
    int label = 0;
    int source_i = 0;
    int source_j = 0;
    int k = 0;
    int gamma = 1;
    double prenorm_norm = 0.0;
    bool degenerate = false;  // prenorm norm <= eps; value left unnormalized
};

// Everything a PointRef resolves against: the two real embedding batches
// plus optional synthetic points per modality.
struct EmbeddingContext {
    const Matrix* audio = nullptr;
    const Matrix* visual = nullptr;
    std::span<const SyntheticPoint> audio_synthetic;
    std::span<const SyntheticPoint> visual_synthetic;

    std::span<const double> resolve(const PointRef& ref) const;
    int label_of(const PointRef& ref, const std::vector<int>& real_labels) const;
};

struct MiningResult {
    std::vector<Triplet> triplets;
    // True when fewer than two distinct labels exist among the real points,
    // so no valid negative can be formed.
    bool degenerate = false;
};

// Enumerates every valid cross-modal triplet in both directions (audio
// anchors against visual candidates and vice versa), keeping those whose
// category matches `filter` (nullopt keeps all). Anchors are real points;
// candidates include any synthetic points present in the context. Output
// order is canonical: audio anchors before visual, then ascending anchor
// index, positive (real before synthetic), negative.
MiningResult mine_context(const EmbeddingContext& ctx,
                          const std::vector<int>& labels, double margin,
                          std::optional<TripletCategory> filter);

// Real-points-only convenience wrapper.
MiningResult mine_triplets(const Matrix& audio_emb, const Matrix& visual_emb,
                           const std::vector<int>& labels, double margin,
                           std::optional<TripletCategory> filter);

struct CategoryCounts {
    long easy = 0;
    long semi_hard = 0;
    long hard = 0;

    long total() const { return easy + semi_hard + hard; }
};

// Category histogram over the same enumeration mine_context performs,
// without materializing the triplets.
CategoryCounts census_context(const EmbeddingContext& ctx,
                              const std::vector<int>& labels, double margin);

struct TripletLossResult {
    double loss = 0.0;
    Matrix audio_grad;   // dL / d(real audio embeddings)
    Matrix visual_grad;  // dL / d(real visual embeddings)
    long active_count = 0;
    bool empty_advisory = false;
};

// Hinge loss mean(0, d_ap - d_an + margin) averaged over active triplets.
// Distances are recomputed from the context, so the same triplet list can be
// re-evaluated after a parameter perturbation. Synthetic endpoints are held
// constant unless grad_through_synthetics routes their gradient into the
// source rows through the interpolation and normalization.
TripletLossResult triplet_loss(const std::vector<Triplet>& triplets,
                               double margin, const EmbeddingContext& ctx,
                               bool grad_through_synthetics = false);

}  // namespace cmr
