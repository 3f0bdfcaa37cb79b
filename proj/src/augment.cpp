#include "cmr/augment.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "cmr/errors.hpp"

namespace cmr {

SyntheticPointSet interpolate(std::span<const double> x_i,
                              std::span<const double> x_j, int label_i,
                              int label_j, int gamma, Modality modality,
                              int source_i, int source_j) {
    if (label_i != label_j) {
        throw DataError("interpolate: labels differ (" + std::to_string(label_i) +
                        " vs " + std::to_string(label_j) + ")");
    }
    if (x_i.size() != x_j.size()) {
        throw DimensionError("interpolate: dims " + std::to_string(x_i.size()) +
                             " vs " + std::to_string(x_j.size()));
    }
    if (gamma < 0) throw DataError("interpolate: gamma must be >= 0");

    SyntheticPointSet set;
    set.source_i = source_i;
    set.source_j = source_j;
    set.modality = modality;
    set.gamma = gamma;
    // k = gamma reproduces x_i and a degenerate segment reproduces the shared
    // point; both exactly, not through the rounding of the general formula.
    const bool endpoints_equal =
        std::equal(x_i.begin(), x_i.end(), x_j.begin());
    for (int k = 1; k <= gamma; ++k) {
        std::vector<double> pt(x_i.size());
        const double wi = static_cast<double>(k);
        const double wj = static_cast<double>(gamma - k);
        const double denom = static_cast<double>(gamma);
        if (k == gamma || endpoints_equal) {
            std::copy(x_i.begin(), x_i.end(), pt.begin());
        } else {
            for (std::size_t d = 0; d < pt.size(); ++d) {
                pt[d] = (wi * x_i[d] + wj * x_j[d]) / denom;
            }
        }
        set.prenorm.push_back(pt);
        set.prenorm_norms.push_back(l2_norm(pt));
        const bool ok = l2_normalize(pt);
        set.degenerate.push_back(!ok);
        set.points.push_back(std::move(pt));
    }
    set.normalized = true;
    return set;
}

std::vector<SyntheticPoint> augment_class(const Matrix& embeddings,
                                          const std::vector<int>& labels,
                                          Modality modality, int gamma,
                                          const PairingPolicy& policy, Rng& rng,
                                          int* skipped_classes) {
    std::vector<SyntheticPoint> out;
    if (gamma <= 0) return out;

    std::map<int, std::vector<int>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        members[labels[i]].push_back(static_cast<int>(i));
    }
    for (const auto& [label, rows] : members) {
        if (rows.size() < 2) {
            if (skipped_classes != nullptr) ++(*skipped_classes);
            continue;
        }
        std::vector<std::pair<int, int>> pairs;
        for (std::size_t a = 0; a < rows.size(); ++a) {
            for (std::size_t b = a + 1; b < rows.size(); ++b) {
                pairs.emplace_back(rows[a], rows[b]);
            }
        }
        if (pairs.size() > policy.max_pairs_per_class) {
            rng.shuffle(pairs);
            pairs.resize(policy.max_pairs_per_class);
            std::sort(pairs.begin(), pairs.end());
        }
        for (const auto& [i, j] : pairs) {
            SyntheticPointSet set = interpolate(
                embeddings.row(static_cast<std::size_t>(i)),
                embeddings.row(static_cast<std::size_t>(j)), label, label, gamma,
                modality, i, j);
            for (int k = 1; k <= gamma; ++k) {
                SyntheticPoint sp;
                sp.value = std::move(set.points[static_cast<std::size_t>(k - 1)]);
                sp.label = label;
                sp.source_i = i;
                sp.source_j = j;
                sp.k = k;
                sp.gamma = gamma;
                sp.prenorm_norm = set.prenorm_norms[static_cast<std::size_t>(k - 1)];
                sp.degenerate = set.degenerate[static_cast<std::size_t>(k - 1)];
                out.push_back(std::move(sp));
            }
        }
    }
    return out;
}

EmbeddingContext AugmentedBatch::context() const {
    EmbeddingContext ctx;
    ctx.audio = audio;
    ctx.visual = visual;
    ctx.audio_synthetic = audio_synthetic;
    ctx.visual_synthetic = visual_synthetic;
    return ctx;
}

AugmentedBatch augment_batch(const Matrix& audio_emb, const Matrix& visual_emb,
                             const std::vector<int>& labels, int gamma,
                             const PairingPolicy& policy, Rng& rng) {
    AugmentedBatch batch;
    batch.audio = &audio_emb;
    batch.visual = &visual_emb;
    batch.labels = labels;
    batch.audio_synthetic = augment_class(audio_emb, labels, Modality::Audio,
                                          gamma, policy, rng,
                                          &batch.skipped_single_member_classes);
    batch.visual_synthetic = augment_class(visual_emb, labels, Modality::Visual,
                                           gamma, policy, rng, nullptr);
    return batch;
}

MiningResult mine_hard_augmented(const AugmentedBatch& batch, double margin) {
    return mine_context(batch.context(), batch.labels, margin,
                        TripletCategory::Hard);
}

}  // namespace cmr
