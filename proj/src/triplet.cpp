#include "cmr/triplet.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "cmr/errors.hpp"

namespace cmr {

double distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DimensionError("distance: dims " + std::to_string(x.size()) +
                             " vs " + std::to_string(y.size()));
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

TripletCategory classify_triplet(double d_ap, double d_an, double margin) {
    if (d_ap < 0.0 || d_an < 0.0) {
        throw DataError("classify_triplet: negative distance (d_ap=" +
                        std::to_string(d_ap) + ", d_an=" + std::to_string(d_an) +
                        ")");
    }
    if (margin <= 0.0) {
        throw DataError("classify_triplet: margin must be positive");
    }
    if (d_an > d_ap + margin) return TripletCategory::Easy;
    if (d_an < d_ap) return TripletCategory::Hard;
    return TripletCategory::SemiHard;
}

std::span<const double> EmbeddingContext::resolve(const PointRef& ref) const {
    if (ref.synthetic) {
        const auto& list =
            ref.modality == Modality::Audio ? audio_synthetic : visual_synthetic;
        return list[static_cast<std::size_t>(ref.index)].value;
    }
    const Matrix* m = ref.modality == Modality::Audio ? audio : visual;
    return m->row(static_cast<std::size_t>(ref.index));
}

int EmbeddingContext::label_of(const PointRef& ref,
                               const std::vector<int>& real_labels) const {
    if (ref.synthetic) {
        const auto& list =
            ref.modality == Modality::Audio ? audio_synthetic : visual_synthetic;
        return list[static_cast<std::size_t>(ref.index)].label;
    }
    return real_labels[static_cast<std::size_t>(ref.index)];
}

namespace {

// Candidate pool for one modality: real rows followed by synthetic points.
struct CandidatePool {
    const Matrix* real;
    std::span<const SyntheticPoint> synthetic;
    const std::vector<int>* real_labels;

    std::size_t size() const { return real->rows + synthetic.size(); }
    bool is_synthetic(std::size_t i) const { return i >= real->rows; }
    PointRef ref(Modality modality, std::size_t i) const {
        if (is_synthetic(i)) {
            return {modality, static_cast<int>(i - real->rows), true};
        }
        return {modality, static_cast<int>(i), false};
    }
    int label(std::size_t i) const {
        if (is_synthetic(i)) return synthetic[i - real->rows].label;
        return (*real_labels)[i];
    }
    std::span<const double> point(std::size_t i) const {
        if (is_synthetic(i)) return synthetic[i - real->rows].value;
        return real->row(i);
    }
};

bool has_two_classes(const std::vector<int>& labels) {
    const std::set<int> distinct(labels.begin(), labels.end());
    return distinct.size() >= 2;
}

// Walks every (anchor, positive, negative) combination for one anchor
// modality in canonical order and hands each classified triplet to `emit`.
template <typename Emit>
void enumerate_direction(Modality anchor_modality, const Matrix& anchors,
                         const CandidatePool& pool,
                         const std::vector<int>& labels, double margin,
                         Emit&& emit) {
    const Modality cand_modality =
        anchor_modality == Modality::Audio ? Modality::Visual : Modality::Audio;
    const std::size_t n_cand = pool.size();
    std::vector<double> dist(n_cand);
    for (std::size_t a = 0; a < anchors.rows; ++a) {
        const auto anchor = anchors.row(a);
        const int anchor_label = labels[a];
        for (std::size_t c = 0; c < n_cand; ++c) {
            dist[c] = distance(anchor, pool.point(c));
        }
        for (std::size_t p = 0; p < n_cand; ++p) {
            if (pool.label(p) != anchor_label) continue;
            for (std::size_t n = 0; n < n_cand; ++n) {
                if (pool.label(n) == anchor_label) continue;
                Triplet t;
                t.anchor = {anchor_modality, static_cast<int>(a), false};
                t.positive = pool.ref(cand_modality, p);
                t.negative = pool.ref(cand_modality, n);
                t.d_ap = dist[p];
                t.d_an = dist[n];
                t.category = classify_triplet(t.d_ap, t.d_an, margin);
                emit(t);
            }
        }
    }
}

}  // namespace

MiningResult mine_context(const EmbeddingContext& ctx,
                          const std::vector<int>& labels, double margin,
                          std::optional<TripletCategory> filter) {
    MiningResult result;
    if (!has_two_classes(labels)) {
        result.degenerate = true;
        return result;
    }
    const CandidatePool visual_pool{ctx.visual, ctx.visual_synthetic, &labels};
    const CandidatePool audio_pool{ctx.audio, ctx.audio_synthetic, &labels};
    auto keep = [&](const Triplet& t) {
        if (!filter || t.category == *filter) result.triplets.push_back(t);
    };
    enumerate_direction(Modality::Audio, *ctx.audio, visual_pool, labels, margin,
                        keep);
    enumerate_direction(Modality::Visual, *ctx.visual, audio_pool, labels, margin,
                        keep);
    return result;
}

MiningResult mine_triplets(const Matrix& audio_emb, const Matrix& visual_emb,
                           const std::vector<int>& labels, double margin,
                           std::optional<TripletCategory> filter) {
    EmbeddingContext ctx;
    ctx.audio = &audio_emb;
    ctx.visual = &visual_emb;
    return mine_context(ctx, labels, margin, filter);
}

CategoryCounts census_context(const EmbeddingContext& ctx,
                              const std::vector<int>& labels, double margin) {
    CategoryCounts counts;
    if (!has_two_classes(labels)) return counts;
    auto tally = [&](const Triplet& t) {
        switch (t.category) {
            case TripletCategory::Easy: ++counts.easy; break;
            case TripletCategory::SemiHard: ++counts.semi_hard; break;
            case TripletCategory::Hard: ++counts.hard; break;
        }
    };
    const CandidatePool visual_pool{ctx.visual, ctx.visual_synthetic, &labels};
    const CandidatePool audio_pool{ctx.audio, ctx.audio_synthetic, &labels};
    enumerate_direction(Modality::Audio, *ctx.audio, visual_pool, labels, margin,
                        tally);
    enumerate_direction(Modality::Visual, *ctx.visual, audio_pool, labels, margin,
                        tally);
    return counts;
}

namespace {

// Gradient of the distance d(x, y) with respect to x is (x-y)/d; defined as
// zero at coincident points via the epsilon floor.
constexpr double kDistEps = 1e-12;

struct GradSink {
    Matrix* audio_grad;
    Matrix* visual_grad;
    const EmbeddingContext* ctx;
    bool through_synthetics;

    void add(const PointRef& ref, std::span<const double> direction,
             double scale) {
        if (!ref.synthetic) {
            Matrix* g = ref.modality == Modality::Audio ? audio_grad : visual_grad;
            auto row = g->row(static_cast<std::size_t>(ref.index));
            for (std::size_t i = 0; i < row.size(); ++i) {
                row[i] += scale * direction[i];
            }
            return;
        }
        if (!through_synthetics) return;  // synthetic points held constant
        const auto& list = ref.modality == Modality::Audio
                               ? ctx->audio_synthetic
                               : ctx->visual_synthetic;
        const SyntheticPoint& sp = list[static_cast<std::size_t>(ref.index)];
        // Through y = u/|u|: du = (g - (g.y) y)/|u|; degenerate points skipped
        // normalization so the chain is the identity there.
        std::vector<double> du(direction.size());
        if (sp.degenerate) {
            for (std::size_t i = 0; i < du.size(); ++i) {
                du[i] = scale * direction[i];
            }
        } else {
            double dot = 0.0;
            for (std::size_t i = 0; i < du.size(); ++i) {
                dot += direction[i] * sp.value[i];
            }
            for (std::size_t i = 0; i < du.size(); ++i) {
                du[i] = scale * (direction[i] - dot * sp.value[i]) / sp.prenorm_norm;
            }
        }
        const double wi = static_cast<double>(sp.k) / sp.gamma;
        const double wj = static_cast<double>(sp.gamma - sp.k) / sp.gamma;
        Matrix* g = ref.modality == Modality::Audio ? audio_grad : visual_grad;
        auto row_i = g->row(static_cast<std::size_t>(sp.source_i));
        auto row_j = g->row(static_cast<std::size_t>(sp.source_j));
        for (std::size_t i = 0; i < du.size(); ++i) {
            row_i[i] += wi * du[i];
            row_j[i] += wj * du[i];
        }
    }
};

}  // namespace

TripletLossResult triplet_loss(const std::vector<Triplet>& triplets,
                               double margin, const EmbeddingContext& ctx,
                               bool grad_through_synthetics) {
    TripletLossResult result;
    result.audio_grad = Matrix(ctx.audio->rows, ctx.audio->cols);
    result.visual_grad = Matrix(ctx.visual->rows, ctx.visual->cols);
    if (triplets.empty()) {
        result.empty_advisory = true;
        return result;
    }

    // Pass 1: hinge values and active count.
    std::vector<double> hinge(triplets.size());
    double total = 0.0;
    for (std::size_t t = 0; t < triplets.size(); ++t) {
        const auto a = ctx.resolve(triplets[t].anchor);
        const auto p = ctx.resolve(triplets[t].positive);
        const auto n = ctx.resolve(triplets[t].negative);
        const double h = distance(a, p) - distance(a, n) + margin;
        hinge[t] = h;
        if (h > 0.0) {
            total += h;
            ++result.active_count;
        }
    }
    const double weight =
        1.0 / static_cast<double>(std::max<long>(result.active_count, 1));
    result.loss = total * weight;

    // Pass 2: gradients for active triplets only.
    GradSink sink{&result.audio_grad, &result.visual_grad, &ctx,
                  grad_through_synthetics};
    std::vector<double> dir_ap, dir_an;
    for (std::size_t t = 0; t < triplets.size(); ++t) {
        if (hinge[t] <= 0.0) continue;
        const auto a = ctx.resolve(triplets[t].anchor);
        const auto p = ctx.resolve(triplets[t].positive);
        const auto n = ctx.resolve(triplets[t].negative);
        const double d_ap = distance(a, p);
        const double d_an = distance(a, n);
        const double inv_ap = 1.0 / std::max(d_ap, kDistEps);
        const double inv_an = 1.0 / std::max(d_an, kDistEps);
        dir_ap.resize(a.size());
        dir_an.resize(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            dir_ap[i] = (a[i] - p[i]) * inv_ap;
            dir_an[i] = (a[i] - n[i]) * inv_an;
        }
        // d(hinge)/da = u_ap - u_an, d/dp = -u_ap, d/dn = +u_an
        std::vector<double> dir_a(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            dir_a[i] = dir_ap[i] - dir_an[i];
        }
        sink.add(triplets[t].anchor, dir_a, weight);
        sink.add(triplets[t].positive, dir_ap, -weight);
        sink.add(triplets[t].negative, dir_an, weight);
    }
    return result;
}

}  // namespace cmr
