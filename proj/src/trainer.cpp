#include "cmr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "cmr/errors.hpp"

namespace cmr {

void TrainConfig::validate() const {
    if (total_epochs < 1) throw UsageError("total_epochs must be >= 1");
    const int sw = effective_switch_epoch();
    if (!(sw > 0 && sw < total_epochs)) {
        throw UsageError("stage_switch_epoch must lie in (0, total_epochs), got " +
                         std::to_string(sw));
    }
    if (batch_size < 4) throw UsageError("batch_size must be >= 4");
    if (learning_rate <= 0.0) throw UsageError("learning_rate must be positive");
    if (margin <= 0.0) throw UsageError("margin must be positive");
    if (gamma < 0) throw UsageError("gamma must be >= 0");
    if (eval_every < 1) throw UsageError("eval_every must be >= 1");
    if (hidden_dim < 1) throw UsageError("hidden_dim must be >= 1");
    if (triplet_weight < 0.0) throw UsageError("triplet_weight must be >= 0");
}

namespace {

std::vector<std::vector<int>> make_batches(std::size_t n, std::size_t batch_size,
                                           Rng& rng) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<long>(start),
                             order.begin() + static_cast<long>(end));
    }
    return batches;
}

struct PhaseSchedule {
    StageSelector phase1;
    StageSelector phase2;
    bool two_phase;
};

PhaseSchedule schedule_for(AblationMode mode) {
    switch (mode) {
        case AblationMode::SemiOnly:
            return {StageSelector::SemiHard, StageSelector::SemiHard, false};
        case AblationMode::HardOnly:
            return {StageSelector::HardAugmented, StageSelector::HardAugmented,
                    false};
        case AblationMode::SemiToHard:
            return {StageSelector::SemiHard, StageSelector::HardAugmented, true};
        case AblationMode::HardToSemi:
            return {StageSelector::HardAugmented, StageSelector::SemiHard, true};
        case AblationMode::HardToAll:
            return {StageSelector::HardAugmented, StageSelector::AllCategories,
                    true};
    }
    throw UsageError("unknown ablation mode");
}

}  // namespace

EpochStats train_epoch(ModelPair& models, const DataView& train,
                       StageSelector selector, const TrainConfig& cfg,
                       OptimizerState& opt, Rng& rng, int epoch_number) {
    EpochStats stats;
    const std::size_t n = train.size();
    const auto batches = make_batches(n, cfg.batch_size, rng);
    const PairingPolicy pairing{cfg.max_pairs_per_class};

    for (const auto& batch_rows : batches) {
        const Matrix audio_in = train.audio.take_rows(batch_rows);
        const Matrix visual_in = train.visual.take_rows(batch_rows);
        std::vector<int> labels;
        labels.reserve(batch_rows.size());
        for (int r : batch_rows) {
            labels.push_back(train.labels[static_cast<std::size_t>(r)]);
        }

        std::vector<LayerCache> audio_caches, visual_caches;
        const Matrix audio_emb = models.audio_net.forward(audio_in, &audio_caches);
        const Matrix visual_emb =
            models.visual_net.forward(visual_in, &visual_caches);

        const LabelLossResult ll_audio = label_loss(audio_emb, labels);
        const LabelLossResult ll_visual = label_loss(visual_emb, labels);
        const double batch_label_loss = ll_audio.loss + ll_visual.loss;

        // Mining space depends on the stage: stage-2 hard mining runs over
        // the augmented embedding set, everything else over the real batch.
        EmbeddingContext real_ctx;
        real_ctx.audio = &audio_emb;
        real_ctx.visual = &visual_emb;

        AugmentedBatch augmented;
        EmbeddingContext mining_ctx = real_ctx;
        std::optional<TripletCategory> filter;
        switch (selector) {
            case StageSelector::SemiHard:
                filter = TripletCategory::SemiHard;
                break;
            case StageSelector::HardAugmented:
                filter = TripletCategory::Hard;
                if (cfg.augmentation_enabled && cfg.gamma > 0) {
                    augmented = augment_batch(audio_emb, visual_emb, labels,
                                              cfg.gamma, pairing, rng);
                    mining_ctx = augmented.context();
                }
                break;
            case StageSelector::AllCategories:
                filter = std::nullopt;
                break;
        }

        const MiningResult mined =
            mine_context(mining_ctx, labels, cfg.margin, filter);
        if (mined.degenerate) ++stats.degenerate_batches;
        const CategoryCounts census =
            census_context(mining_ctx, labels, cfg.margin);
        stats.counts.easy += census.easy;
        stats.counts.semi_hard += census.semi_hard;
        stats.counts.hard += census.hard;
        stats.mined_triplets += static_cast<long>(mined.triplets.size());

        const TripletLossResult tl =
            triplet_loss(mined.triplets, cfg.margin, mining_ctx,
                         cfg.gradient_flow_through_synthetics);
        const double batch_triplet_loss = cfg.triplet_weight * tl.loss;
        const double batch_total = batch_label_loss + batch_triplet_loss;
        if (!std::isfinite(batch_total)) {
            throw NumericError("non-finite loss at epoch " +
                               std::to_string(epoch_number));
        }

        Matrix audio_grad = ll_audio.grad;
        Matrix visual_grad = ll_visual.grad;
        for (std::size_t i = 0; i < audio_grad.data.size(); ++i) {
            audio_grad.data[i] += cfg.triplet_weight * tl.audio_grad.data[i];
        }
        for (std::size_t i = 0; i < visual_grad.data.size(); ++i) {
            visual_grad.data[i] += cfg.triplet_weight * tl.visual_grad.data[i];
        }

        models.zero_grads();
        models.audio_net.backward(audio_caches, audio_grad);
        models.visual_net.backward(visual_caches, visual_grad);
        auto params = models.parameters();
        opt.step(params);

        const double w = static_cast<double>(batch_rows.size()) /
                         static_cast<double>(n);
        stats.label_loss += w * batch_label_loss;
        stats.triplet_loss += w * batch_triplet_loss;
        stats.total_loss += w * batch_total;
        ++stats.batches;
    }
    return stats;
}

namespace {

TrainResult run_schedule(const PairedDataset& data, const TrainConfig& cfg,
                         AblationMode mode) {
    cfg.validate();
    const DataView train = subset(data, Split::Train);
    const DataView test = subset(data, Split::Test);
    if (train.size() == 0 || test.size() == 0) {
        throw DataError("training requires non-empty train and test splits");
    }

    const PhaseSchedule schedule = schedule_for(mode);
    const int switch_epoch = cfg.effective_switch_epoch();

    TrainResult result;
    result.models =
        make_model_pair(data.audio.cols, data.visual.cols, cfg.hidden_dim,
                        static_cast<std::size_t>(data.num_classes), cfg.seed,
                        cfg.num_hidden_layers);
    OptimizerState opt;
    opt.kind = cfg.optimizer;
    opt.learning_rate = cfg.learning_rate;

    for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
        const bool second_phase = schedule.two_phase && epoch >= switch_epoch;
        if (schedule.two_phase && epoch == switch_epoch) {
            result.stage_boundary_snapshot = result.models;
            if (cfg.reset_optimizer_at_switch) opt.reset_moments();
        }
        const StageSelector selector =
            second_phase ? schedule.phase2 : schedule.phase1;

        Rng epoch_rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
        const EpochStats stats = train_epoch(result.models, train, selector, cfg,
                                             opt, epoch_rng, epoch);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.stage = second_phase ? 2 : 1;
        rec.label_loss = stats.label_loss;
        rec.triplet_loss = stats.triplet_loss;
        rec.total_loss = stats.total_loss;
        rec.n_easy = stats.counts.easy;
        rec.n_semihard = stats.counts.semi_hard;
        rec.n_hard = stats.counts.hard;

        if (stats.mined_triplets == 0) {
            result.log.advisories.push_back(
                "epoch " + std::to_string(epoch) +
                ": no triplets mined; label loss only");
        }

        if (epoch % cfg.eval_every == 0 || epoch == cfg.total_epochs) {
            const Matrix audio_emb = project(result.models.audio_net, test.audio);
            const Matrix visual_emb =
                project(result.models.visual_net, test.visual);
            const RetrievalReport report = evaluate_bidirectional(
                audio_emb, visual_emb, test.labels, cfg.eval_similarity);
            rec.map_a2v = report.audio_to_visual.map;
            rec.map_v2a = report.visual_to_audio.map;
            rec.map_avg = report.map_average;
        }
        result.log.rows.push_back(rec);
    }
    return result;
}

}  // namespace

TrainResult run_curriculum(const PairedDataset& data, const TrainConfig& cfg) {
    return run_schedule(data, cfg, AblationMode::SemiToHard);
}

TrainResult run_ablation(const PairedDataset& data, const TrainConfig& cfg,
                         AblationMode mode) {
    return run_schedule(data, cfg, mode);
}

std::vector<GammaSweepRow> run_gamma_sweep(const PairedDataset& data,
                                           TrainConfig cfg,
                                           const std::vector<int>& gammas) {
    std::vector<GammaSweepRow> rows;
    for (int g : gammas) {
        cfg.gamma = g;
        const TrainResult result = run_curriculum(data, cfg);
        const EpochRecord& last = result.log.rows.back();
        GammaSweepRow row;
        row.gamma = g;
        row.map_a2v = last.map_a2v.value_or(0.0);
        row.map_v2a = last.map_v2a.value_or(0.0);
        row.map_avg = last.map_avg.value_or(0.0);
        rows.push_back(row);
    }
    return rows;
}

CombinedLossBatch make_combined_batch(const ModelPair& models,
                                      const Matrix& audio_features,
                                      const Matrix& visual_features,
                                      const std::vector<int>& labels,
                                      const TrainConfig& cfg,
                                      StageSelector selector) {
    CombinedLossBatch batch;
    batch.audio_features = audio_features;
    batch.visual_features = visual_features;
    batch.labels = labels;
    batch.margin = cfg.margin;
    batch.triplet_weight = cfg.triplet_weight;
    batch.max_pairs_per_class = cfg.max_pairs_per_class;
    batch.aug_seed = Rng::mix(cfg.seed, 0xa6);
    batch.grad_through_synthetics = cfg.gradient_flow_through_synthetics;

    const Matrix audio_emb = project(models.audio_net, audio_features);
    const Matrix visual_emb = project(models.visual_net, visual_features);
    EmbeddingContext ctx;
    ctx.audio = &audio_emb;
    ctx.visual = &visual_emb;

    std::optional<TripletCategory> filter;
    if (selector == StageSelector::SemiHard) filter = TripletCategory::SemiHard;
    if (selector == StageSelector::HardAugmented) {
        filter = TripletCategory::Hard;
        if (cfg.augmentation_enabled && cfg.gamma > 0) {
            batch.gamma = cfg.gamma;
            Rng rng(batch.aug_seed);
            AugmentedBatch augmented =
                augment_batch(audio_emb, visual_emb, labels, cfg.gamma,
                              PairingPolicy{cfg.max_pairs_per_class}, rng);
            batch.frozen_audio_syn = augmented.audio_synthetic;
            batch.frozen_visual_syn = augmented.visual_synthetic;
            ctx.audio_synthetic = batch.frozen_audio_syn;
            ctx.visual_synthetic = batch.frozen_visual_syn;
        }
    }
    batch.triplets = mine_context(ctx, labels, cfg.margin, filter).triplets;
    return batch;
}

namespace {

// Embeddings plus the synthetic context for one evaluation of the combined
// objective. Regenerates synthetics from live embeddings only when gradients
// are supposed to flow through them.
struct CombinedEval {
    Matrix audio_emb;
    Matrix visual_emb;
    std::vector<SyntheticPoint> regenerated_audio;
    std::vector<SyntheticPoint> regenerated_visual;
    EmbeddingContext ctx;
};

CombinedEval project_for_combined(const ModelPair& models,
                                  const CombinedLossBatch& batch,
                                  std::vector<LayerCache>* audio_caches,
                                  std::vector<LayerCache>* visual_caches) {
    CombinedEval ev;
    ev.audio_emb = models.audio_net.forward(batch.audio_features, audio_caches);
    ev.visual_emb =
        models.visual_net.forward(batch.visual_features, visual_caches);
    ev.ctx.audio = &ev.audio_emb;
    ev.ctx.visual = &ev.visual_emb;
    if (batch.gamma > 0 && batch.grad_through_synthetics) {
        Rng rng(batch.aug_seed);
        AugmentedBatch augmented = augment_batch(
            ev.audio_emb, ev.visual_emb, batch.labels, batch.gamma,
            PairingPolicy{batch.max_pairs_per_class}, rng);
        ev.regenerated_audio = std::move(augmented.audio_synthetic);
        ev.regenerated_visual = std::move(augmented.visual_synthetic);
        ev.ctx.audio_synthetic = ev.regenerated_audio;
        ev.ctx.visual_synthetic = ev.regenerated_visual;
    } else {
        ev.ctx.audio_synthetic = batch.frozen_audio_syn;
        ev.ctx.visual_synthetic = batch.frozen_visual_syn;
    }
    return ev;
}

}  // namespace

double combined_loss_value(const ModelPair& models,
                           const CombinedLossBatch& batch) {
    const CombinedEval ev =
        project_for_combined(models, batch, nullptr, nullptr);
    const double label_term = label_loss(ev.audio_emb, batch.labels).loss +
                              label_loss(ev.visual_emb, batch.labels).loss;
    const double triplet_term =
        triplet_loss(batch.triplets, batch.margin, ev.ctx,
                     batch.grad_through_synthetics)
            .loss;
    return label_term + batch.triplet_weight * triplet_term;
}

double combined_loss_grads(ModelPair& models, const CombinedLossBatch& batch) {
    std::vector<LayerCache> audio_caches, visual_caches;
    const CombinedEval ev =
        project_for_combined(models, batch, &audio_caches, &visual_caches);
    const LabelLossResult ll_audio = label_loss(ev.audio_emb, batch.labels);
    const LabelLossResult ll_visual = label_loss(ev.visual_emb, batch.labels);
    const TripletLossResult tl =
        triplet_loss(batch.triplets, batch.margin, ev.ctx,
                     batch.grad_through_synthetics);

    Matrix audio_grad = ll_audio.grad;
    Matrix visual_grad = ll_visual.grad;
    for (std::size_t i = 0; i < audio_grad.data.size(); ++i) {
        audio_grad.data[i] += batch.triplet_weight * tl.audio_grad.data[i];
    }
    for (std::size_t i = 0; i < visual_grad.data.size(); ++i) {
        visual_grad.data[i] += batch.triplet_weight * tl.visual_grad.data[i];
    }
    models.zero_grads();
    models.audio_net.backward(audio_caches, audio_grad);
    models.visual_net.backward(visual_caches, visual_grad);
    return ll_audio.loss + ll_visual.loss + batch.triplet_weight * tl.loss;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_metrics_csv(
    const std::string& path, const MetricsLog& log,
    const std::vector<std::pair<std::string, std::string>>& config_echo) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (const auto& [key, value] : config_echo) {
        out << "# " << key << "=" << value << "\n";
    }
    out << "epoch,stage,label_loss,triplet_loss,total_loss,"
           "n_easy,n_semihard,n_hard,map_a2v,map_v2a,map_avg\n";
    for (const EpochRecord& r : log.rows) {
        out << r.epoch << ',' << r.stage << ',' << fmt_double(r.label_loss) << ','
            << fmt_double(r.triplet_loss) << ',' << fmt_double(r.total_loss)
            << ',' << r.n_easy << ',' << r.n_semihard << ',' << r.n_hard << ','
            << (r.map_a2v ? fmt_double(*r.map_a2v) : "") << ','
            << (r.map_v2a ? fmt_double(*r.map_v2a) : "") << ','
            << (r.map_avg ? fmt_double(*r.map_avg) : "") << "\n";
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

const char* to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::SemiOnly: return "semi-only";
        case AblationMode::HardOnly: return "hard-only";
        case AblationMode::SemiToHard: return "semi-to-hard";
        case AblationMode::HardToSemi: return "hard-to-semi";
        case AblationMode::HardToAll: return "hard-to-all";
    }
    return "?";
}

std::optional<AblationMode> ablation_mode_from_string(const std::string& name) {
    if (name == "semi-only") return AblationMode::SemiOnly;
    if (name == "hard-only") return AblationMode::HardOnly;
    if (name == "semi-to-hard") return AblationMode::SemiToHard;
    if (name == "hard-to-semi") return AblationMode::HardToSemi;
    if (name == "hard-to-all") return AblationMode::HardToAll;
    return std::nullopt;
}

}  // namespace cmr
