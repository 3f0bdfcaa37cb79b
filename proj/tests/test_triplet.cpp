#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "cmr/errors.hpp"
#include "cmr/grad_check.hpp"
#include "cmr/triplet.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cmr;

namespace {

// small labeled batch with embeddings placed by hand
struct TestBatch {
    Matrix audio;
    Matrix visual;
    std::vector<int> labels;
};

TestBatch random_batch(std::size_t n, int classes, std::uint64_t seed,
                       std::size_t dim = 4, double scale = 1.0) {
    Rng rng(seed);
    TestBatch b;
    b.audio = oracle::random_matrix(n, dim, rng, scale);
    b.visual = oracle::random_matrix(n, dim, rng, scale);
    b.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        b.labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    }
    rng.shuffle(b.labels);
    return b;
}

}  // namespace

TEST_CASE("distance basics") {
    std::vector<double> a = {0.0, 0.0};
    std::vector<double> b = {3.0, 4.0};
    CHECK(distance(a, b) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(distance(b, b) == 0.0);
    CHECK(distance(a, b) == distance(b, a));

    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> x(6), y(6);
        for (auto& v : x) v = rng.uniform(-5.0, 5.0);
        for (auto& v : y) v = rng.uniform(-5.0, 5.0);
        CHECK(distance(x, y) ==
              doctest::Approx(oracle::distance_naive(x, y)).epsilon(1e-12));
    }

    std::vector<double> short_vec = {1.0};
    CHECK_THROWS_AS(distance(a, short_vec), DimensionError);
}

TEST_CASE("classify_triplet instantiates the three regions") {
    CHECK(classify_triplet(0.5, 1.0, 0.2) == TripletCategory::Easy);
    CHECK(classify_triplet(0.5, 0.4, 0.2) == TripletCategory::Hard);
    CHECK(classify_triplet(0.5, 0.6, 0.2) == TripletCategory::SemiHard);
    // boundary ties land in the semi-hard band
    CHECK(classify_triplet(0.5, 0.5, 0.2) == TripletCategory::SemiHard);
    CHECK(classify_triplet(0.5, 0.7, 0.2) == TripletCategory::SemiHard);
    CHECK_THROWS_AS(classify_triplet(-0.1, 0.5, 0.2), DataError);
    CHECK_THROWS_AS(classify_triplet(0.1, 0.5, 0.0), DataError);
}

TEST_CASE("classify_triplet partitions the space") {
    Rng rng(77);
    for (int i = 0; i < 100000; ++i) {
        const double d_ap = rng.uniform(0.0, 4.0);
        const double d_an = rng.uniform(0.0, 4.0);
        const double margin = rng.uniform(1e-6, 2.0);
        const TripletCategory got = classify_triplet(d_ap, d_an, margin);
        // re-derive the inequalities independently
        int matches = 0;
        if (d_an > d_ap + margin) {
            ++matches;
            CHECK(got == TripletCategory::Easy);
        }
        if (d_an < d_ap) {
            ++matches;
            CHECK(got == TripletCategory::Hard);
        }
        if (d_an >= d_ap && d_an <= d_ap + margin) {
            ++matches;
            CHECK(got == TripletCategory::SemiHard);
        }
        CHECK(matches == 1);
    }
}

TEST_CASE("mining a single-class batch is degenerate") {
    TestBatch b = random_batch(2, 1, 5);
    const MiningResult r =
        mine_triplets(b.audio, b.visual, b.labels, 0.2, std::nullopt);
    CHECK(r.degenerate);
    CHECK(r.triplets.empty());
}

TEST_CASE("well-separated clusters have no hard triplets") {
    // two classes, clusters 100 apart, within-cluster spread ~1
    Rng rng(3);
    Matrix audio(4, 3), visual(4, 3);
    std::vector<int> labels = {0, 0, 1, 1};
    for (std::size_t i = 0; i < 4; ++i) {
        const double base = labels[i] == 0 ? 0.0 : 100.0;
        for (std::size_t d = 0; d < 3; ++d) {
            audio.at(i, d) = base + rng.uniform(-1.0, 1.0);
            visual.at(i, d) = base + rng.uniform(-1.0, 1.0);
        }
    }
    const MiningResult hard =
        mine_triplets(audio, visual, labels, 0.2, TripletCategory::Hard);
    CHECK_FALSE(hard.degenerate);
    CHECK(hard.triplets.empty());
    const MiningResult easy =
        mine_triplets(audio, visual, labels, 0.2, TripletCategory::Easy);
    CHECK_FALSE(easy.triplets.empty());
}

TEST_CASE("mine_triplets equals brute-force enumeration for every filter") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const std::size_t n = 4 + seed % 17;
        const int classes = 2 + static_cast<int>(seed % 4);
        TestBatch b = random_batch(n, classes, 100 + seed);
        const double margin = 0.1 + 0.05 * static_cast<double>(seed % 5);

        const auto audio_pts = oracle::real_points(b.audio, b.labels);
        const auto visual_pts = oracle::real_points(b.visual, b.labels);

        const std::vector<std::optional<TripletCategory>> filters = {
            std::nullopt, TripletCategory::Easy, TripletCategory::SemiHard,
            TripletCategory::Hard};
        for (const auto& filter : filters) {
            const MiningResult got =
                mine_triplets(b.audio, b.visual, b.labels, margin, filter);
            int oracle_filter = -1;
            if (filter == TripletCategory::Easy) oracle_filter = 0;
            if (filter == TripletCategory::SemiHard) oracle_filter = 1;
            if (filter == TripletCategory::Hard) oracle_filter = 2;
            const auto want = oracle::brute_force_mine(
                audio_pts, visual_pts, b.audio, b.visual, b.labels, margin,
                oracle_filter);
            CHECK(oracle::keys_of(got.triplets) == want);
        }
    }
}

TEST_CASE("census matches materialized mining counts") {
    TestBatch b = random_batch(14, 3, 9);
    EmbeddingContext ctx;
    ctx.audio = &b.audio;
    ctx.visual = &b.visual;
    const CategoryCounts counts = census_context(ctx, b.labels, 0.3);
    const MiningResult all =
        mine_context(ctx, b.labels, 0.3, std::nullopt);
    long easy = 0, semi = 0, hard = 0;
    for (const Triplet& t : all.triplets) {
        if (t.category == TripletCategory::Easy) ++easy;
        if (t.category == TripletCategory::SemiHard) ++semi;
        if (t.category == TripletCategory::Hard) ++hard;
    }
    CHECK(counts.easy == easy);
    CHECK(counts.semi_hard == semi);
    CHECK(counts.hard == hard);
    CHECK(counts.total() == static_cast<long>(all.triplets.size()));
}

TEST_CASE("census: hard counts are margin-free, semi-hard band widens") {
    TestBatch b = random_batch(16, 3, 31);
    EmbeddingContext ctx;
    ctx.audio = &b.audio;
    ctx.visual = &b.visual;
    long prev_semi_plus_hard = -1;
    long hard_at_first = -1;
    for (double margin : {0.05, 0.2, 0.5, 1.0, 5.0, 50.0}) {
        const CategoryCounts c = census_context(ctx, b.labels, margin);
        if (hard_at_first < 0) hard_at_first = c.hard;
        CHECK(c.hard == hard_at_first);
        CHECK(c.semi_hard + c.hard >= prev_semi_plus_hard);
        prev_semi_plus_hard = c.semi_hard + c.hard;
    }
}

TEST_CASE("every mined triplet is cross-modal and label-consistent") {
    TestBatch b = random_batch(20, 4, 55);
    const MiningResult r =
        mine_triplets(b.audio, b.visual, b.labels, 0.25, std::nullopt);
    REQUIRE_FALSE(r.triplets.empty());
    for (const Triplet& t : r.triplets) {
        CHECK(t.positive.modality != t.anchor.modality);
        CHECK(t.negative.modality != t.anchor.modality);
        CHECK(t.positive.modality == t.negative.modality);
        const int la = b.labels[static_cast<std::size_t>(t.anchor.index)];
        CHECK(b.labels[static_cast<std::size_t>(t.positive.index)] == la);
        CHECK(b.labels[static_cast<std::size_t>(t.negative.index)] != la);
        CHECK(t.d_ap >= 0.0);
        CHECK(t.d_an >= 0.0);
    }
}

TEST_CASE("mined output is in canonical order") {
    TestBatch b = random_batch(12, 3, 71);
    const MiningResult r =
        mine_triplets(b.audio, b.visual, b.labels, 0.25, std::nullopt);
    auto key = [](const Triplet& t) {
        return std::make_tuple(t.anchor.modality == Modality::Audio ? 0 : 1,
                               t.anchor.index, t.positive.synthetic ? 1 : 0,
                               t.positive.index, t.negative.synthetic ? 1 : 0,
                               t.negative.index);
    };
    for (std::size_t i = 1; i < r.triplets.size(); ++i) {
        CHECK(key(r.triplets[i - 1]) < key(r.triplets[i]));
    }
}

TEST_CASE("scaling embeddings and margin together preserves categories") {
    TestBatch b = random_batch(10, 3, 13);
    const double margin = 0.2;
    for (double c : {0.5, 2.0, 17.0}) {
        TestBatch scaled = b;
        for (double& v : scaled.audio.data) v *= c;
        for (double& v : scaled.visual.data) v *= c;
        const MiningResult base =
            mine_triplets(b.audio, b.visual, b.labels, margin, std::nullopt);
        const MiningResult big = mine_triplets(scaled.audio, scaled.visual,
                                               b.labels, margin * c, std::nullopt);
        REQUIRE(base.triplets.size() == big.triplets.size());
        for (std::size_t i = 0; i < base.triplets.size(); ++i) {
            CHECK(base.triplets[i].category == big.triplets[i].category);
        }
    }
}

TEST_CASE("triplet_loss direct arithmetic") {
    // anchor at origin, positive at distance 0.5, negative at distance 0.4
    Matrix audio(1, 2), visual(2, 2);
    audio.at(0, 0) = 0.0;
    visual.at(0, 0) = 0.5;  // positive
    visual.at(1, 0) = 0.4;  // negative

    Triplet t;
    t.anchor = {Modality::Audio, 0, false};
    t.positive = {Modality::Visual, 0, false};
    t.negative = {Modality::Visual, 1, false};

    EmbeddingContext ctx;
    ctx.audio = &audio;
    ctx.visual = &visual;

    SUBCASE("active hinge: 0.5 - 0.4 + 0.2 = 0.3") {
        const TripletLossResult r = triplet_loss({t}, 0.2, ctx);
        CHECK(r.loss == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(r.active_count == 1);
        CHECK_FALSE(r.empty_advisory);
    }
    SUBCASE("easy triplet contributes nothing") {
        visual.at(1, 0) = 5.0;  // far negative
        const TripletLossResult r = triplet_loss({t}, 0.2, ctx);
        CHECK(r.loss == 0.0);
        CHECK(r.active_count == 0);
        for (double v : r.audio_grad.data) CHECK(v == 0.0);
        for (double v : r.visual_grad.data) CHECK(v == 0.0);
    }
    SUBCASE("empty list returns zero with an advisory") {
        const TripletLossResult r = triplet_loss({}, 0.2, ctx);
        CHECK(r.loss == 0.0);
        CHECK(r.empty_advisory);
    }
}

TEST_CASE("triplet_loss is monotone in the two distances") {
    Matrix audio(1, 2), visual(2, 2);
    audio.at(0, 0) = 0.0;
    visual.at(0, 0) = 0.5;
    visual.at(1, 0) = 0.4;
    Triplet t;
    t.anchor = {Modality::Audio, 0, false};
    t.positive = {Modality::Visual, 0, false};
    t.negative = {Modality::Visual, 1, false};
    EmbeddingContext ctx;
    ctx.audio = &audio;
    ctx.visual = &visual;

    double prev = triplet_loss({t}, 0.2, ctx).loss;
    for (double dn : {0.45, 0.5, 0.55, 0.6}) {
        visual.at(1, 0) = dn;  // push the negative away
        const double now = triplet_loss({t}, 0.2, ctx).loss;
        CHECK(now <= prev);
        prev = now;
    }
    visual.at(1, 0) = 0.4;
    prev = triplet_loss({t}, 0.2, ctx).loss;
    for (double dp : {0.55, 0.6, 0.7}) {
        visual.at(0, 0) = dp;  // pull the positive away
        const double now = triplet_loss({t}, 0.2, ctx).loss;
        CHECK(now >= prev);
        prev = now;
    }
}

TEST_CASE("triplet_loss gradients match finite differences") {
    TestBatch b = random_batch(10, 3, 2024, 5);
    const double margin = 0.4;
    EmbeddingContext ctx;
    ctx.audio = &b.audio;
    ctx.visual = &b.visual;
    const MiningResult mined =
        mine_triplets(b.audio, b.visual, b.labels, margin, std::nullopt);
    REQUIRE_FALSE(mined.triplets.empty());

    Matrix audio_grad(b.audio.rows, b.audio.cols);
    Matrix visual_grad(b.visual.rows, b.visual.cols);
    std::vector<ParamSlot> slots = {
        {"audio_emb", std::span<double>(b.audio.data),
         std::span<double>(audio_grad.data)},
        {"visual_emb", std::span<double>(b.visual.data),
         std::span<double>(visual_grad.data)}};
    auto loss_fn = [&]() {
        return triplet_loss(mined.triplets, margin, ctx).loss;
    };
    auto grad_fn = [&]() {
        const TripletLossResult r = triplet_loss(mined.triplets, margin, ctx);
        std::copy(r.audio_grad.data.begin(), r.audio_grad.data.end(),
                  audio_grad.data.begin());
        std::copy(r.visual_grad.data.begin(), r.visual_grad.data.end(),
                  visual_grad.data.begin());
    };
    const GradCheckReport report =
        finite_diff_check(slots, loss_fn, grad_fn, 1e-5);
    CHECK(report.max_rel_error < 1e-4);
}
