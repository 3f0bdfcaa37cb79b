#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <set>

#include "cmr/augment.hpp"
#include "cmr/errors.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cmr;

TEST_CASE("interpolate: midpoint plus duplicated endpoint at gamma=2") {
    std::vector<double> xi = {1.0, 0.0};
    std::vector<double> xj = {0.0, 1.0};
    const SyntheticPointSet set = interpolate(xi, xj, 3, 3, 2);
    REQUIRE(set.points.size() == 2);
    CHECK(set.prenorm[0] == std::vector<double>{0.5, 0.5});
    CHECK(set.prenorm[1] == std::vector<double>{1.0, 0.0});
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(set.points[0][0] == doctest::Approx(inv_sqrt2).epsilon(1e-12));
    CHECK(set.points[0][1] == doctest::Approx(inv_sqrt2).epsilon(1e-12));
    CHECK(set.points[1] == std::vector<double>{1.0, 0.0});
    CHECK(set.normalized);
}

TEST_CASE("interpolate: scalar arithmetic progression") {
    std::vector<double> xi = {4.0};
    std::vector<double> xj = {0.0};
    const SyntheticPointSet set = interpolate(xi, xj, 0, 0, 4);
    REQUIRE(set.prenorm.size() == 4);
    CHECK(set.prenorm[0][0] == 1.0);
    CHECK(set.prenorm[1][0] == 2.0);
    CHECK(set.prenorm[2][0] == 3.0);
    CHECK(set.prenorm[3][0] == 4.0);
}

TEST_CASE("interpolate: degenerate segment keeps the shared point") {
    std::vector<double> x = {2.0, -1.0, 0.5};
    const SyntheticPointSet set = interpolate(x, x, 1, 1, 3);
    for (const auto& p : set.prenorm) {
        CHECK(p == x);
    }
}

TEST_CASE("interpolate: label mismatch and gamma edge cases") {
    std::vector<double> xi = {1.0};
    std::vector<double> xj = {2.0};
    CHECK_THROWS_AS(interpolate(xi, xj, 0, 1, 2), DataError);
    const SyntheticPointSet empty = interpolate(xi, xj, 0, 0, 0);
    CHECK(empty.points.empty());
    std::vector<double> wrong_dim = {1.0, 2.0};
    CHECK_THROWS_AS(interpolate(xi, wrong_dim, 0, 0, 2), DimensionError);
}

TEST_CASE("pre-normalization points stay on the segment, coefficients sum to 1") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t dim = 1 + rng.uniform_index(8);
        const int gamma = 1 + static_cast<int>(rng.uniform_index(8));
        std::vector<double> xi(dim), xj(dim);
        for (auto& v : xi) v = rng.uniform(-5.0, 5.0);
        for (auto& v : xj) v = rng.uniform(-5.0, 5.0);
        const SyntheticPointSet set = interpolate(xi, xj, 1, 1, gamma);
        REQUIRE(static_cast<int>(set.prenorm.size()) == gamma);
        CHECK(set.prenorm.back() == xi);  // k = gamma endpoint, bit-exact
        for (int k = 1; k <= gamma; ++k) {
            const auto& p = set.prenorm[static_cast<std::size_t>(k - 1)];
            for (std::size_t d = 0; d < dim; ++d) {
                const double lo = std::min(xi[d], xj[d]) - 1e-12;
                const double hi = std::max(xi[d], xj[d]) + 1e-12;
                CHECK(p[d] >= lo);
                CHECK(p[d] <= hi);
            }
            // k/gamma + (gamma-k)/gamma collapses to gamma/gamma
            const double coeff_sum =
                (static_cast<double>(k) + static_cast<double>(gamma - k)) /
                static_cast<double>(gamma);
            CHECK(coeff_sum == 1.0);
        }
    }
}

TEST_CASE("augment_class skips single-member classes with an advisory") {
    Matrix emb(1, 3, 0.5);
    std::vector<int> labels = {0};
    Rng rng(1);
    int skipped = 0;
    const auto points = augment_class(emb, labels, Modality::Audio, 2,
                                      PairingPolicy{}, rng, &skipped);
    CHECK(points.empty());
    CHECK(skipped == 1);
}

TEST_CASE("augment_class all-pairs combinatorics: 3 members, gamma=2 -> 6") {
    Rng data_rng(4);
    Matrix emb = oracle::random_matrix(3, 4, data_rng);
    std::vector<int> labels = {1, 1, 1};
    Rng rng(1);
    const auto points = augment_class(emb, labels, Modality::Visual, 2,
                                      PairingPolicy{}, rng, nullptr);
    CHECK(points.size() == 6);  // 3 pairs x gamma 2
    for (const auto& p : points) {
        CHECK(p.label == 1);
        CHECK(p.gamma == 2);
        CHECK(p.source_i < p.source_j);
    }
}

TEST_CASE("synthetic count scales linearly in gamma") {
    Rng data_rng(14);
    Matrix emb = oracle::random_matrix(6, 4, data_rng);
    std::vector<int> labels = {0, 0, 0, 1, 1, 1};
    std::size_t per_gamma = 0;
    for (int gamma : {1, 2, 4, 8}) {
        Rng rng(9);
        const auto points = augment_class(emb, labels, Modality::Audio, gamma,
                                          PairingPolicy{}, rng, nullptr);
        if (gamma == 1) per_gamma = points.size();
        CHECK(points.size() == per_gamma * static_cast<std::size_t>(gamma));
    }
}

TEST_CASE("pair cap bounds the per-class pair count deterministically") {
    Rng data_rng(21);
    Matrix emb = oracle::random_matrix(12, 3, data_rng);
    std::vector<int> labels(12, 0);
    labels[11] = 1;  // second class so mining stays meaningful elsewhere
    PairingPolicy policy;
    policy.max_pairs_per_class = 5;

    Rng rng_a(33);
    const auto a = augment_class(emb, labels, Modality::Audio, 1, policy, rng_a,
                                 nullptr);
    CHECK(a.size() == 5);  // 11-member class capped at 5 pairs x gamma 1

    Rng rng_b(33);
    const auto b = augment_class(emb, labels, Modality::Audio, 1, policy, rng_b,
                                 nullptr);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].source_i == b[i].source_i);
        CHECK(a[i].source_j == b[i].source_j);
        CHECK(a[i].value == b[i].value);
    }
}

TEST_CASE("gamma=0 leaves the batch bit-identical and mining reduces") {
    Rng data_rng(5);
    const Matrix audio = oracle::random_matrix(8, 4, data_rng);
    const Matrix visual = oracle::random_matrix(8, 4, data_rng);
    std::vector<int> labels = {0, 1, 2, 0, 1, 2, 0, 1};

    Rng rng(2);
    const AugmentedBatch batch =
        augment_batch(audio, visual, labels, 0, PairingPolicy{}, rng);
    CHECK(batch.audio_synthetic.empty());
    CHECK(batch.visual_synthetic.empty());
    CHECK(batch.audio->data == audio.data);
    CHECK(batch.labels == labels);

    const MiningResult augmented = mine_hard_augmented(batch, 0.2);
    const MiningResult plain =
        mine_triplets(audio, visual, labels, 0.2, TripletCategory::Hard);
    CHECK(augmented.triplets == plain.triplets);
}

TEST_CASE("a synthetic negative inside d_ap creates a hard triplet") {
    // Class 0 sits near the origin, class 1 in a tight far-out cluster and
    // aligned across modalities, so every real triplet is easy. Synthetic
    // points are L2-normalized, which drags the class-1 interpolants onto
    // the unit circle right next to the class-0 anchor: a hard negative
    // that only exists in the augmented space.
    Matrix audio(3, 2), visual(3, 2);
    std::vector<int> labels = {0, 1, 1};
    audio.at(0, 0) = 1.0;  audio.at(0, 1) = 0.0;
    audio.at(1, 0) = 30.0; audio.at(1, 1) = 12.0;
    audio.at(2, 0) = 30.0; audio.at(2, 1) = 12.2;
    visual.at(0, 0) = 1.0;  visual.at(0, 1) = 1.05;
    visual.at(1, 0) = 30.0; visual.at(1, 1) = 12.0;
    visual.at(2, 0) = 30.0; visual.at(2, 1) = 12.2;

    const MiningResult plain =
        mine_triplets(audio, visual, labels, 0.2, TripletCategory::Hard);
    CHECK(plain.triplets.empty());

    Rng rng(3);
    const AugmentedBatch batch =
        augment_batch(audio, visual, labels, 2, PairingPolicy{}, rng);
    REQUIRE(batch.visual_synthetic.size() == 2);  // one pair, gamma 2
    REQUIRE(batch.audio_synthetic.size() == 2);

    const MiningResult hard = mine_hard_augmented(batch, 0.2);
    REQUIRE_FALSE(hard.triplets.empty());
    bool synthetic_negative_seen = false;
    for (const Triplet& t : hard.triplets) {
        CHECK(t.category == TripletCategory::Hard);
        if (t.negative.synthetic) synthetic_negative_seen = true;
    }
    CHECK(synthetic_negative_seen);

    // cross-check the whole augmented mining against the oracle
    auto audio_pts = oracle::real_points(audio, labels);
    auto visual_pts = oracle::real_points(visual, labels);
    oracle::append_synthetic(audio_pts, batch.audio_synthetic);
    oracle::append_synthetic(visual_pts, batch.visual_synthetic);
    const auto want = oracle::brute_force_mine(audio_pts, visual_pts, audio,
                                               visual, labels, 0.2, 2);
    CHECK(oracle::keys_of(hard.triplets) == want);
}

TEST_CASE("augmented mining equals brute force on random batches") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Rng data_rng(300 + seed);
        const std::size_t n = 10;
        const Matrix audio = oracle::random_matrix(n, 3, data_rng);
        const Matrix visual = oracle::random_matrix(n, 3, data_rng);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 3);

        Rng rng(400 + seed);
        const AugmentedBatch batch =
            augment_batch(audio, visual, labels, 2, PairingPolicy{}, rng);
        const MiningResult got = mine_hard_augmented(batch, 0.3);

        auto audio_pts = oracle::real_points(audio, labels);
        auto visual_pts = oracle::real_points(visual, labels);
        oracle::append_synthetic(audio_pts, batch.audio_synthetic);
        oracle::append_synthetic(visual_pts, batch.visual_synthetic);
        const auto want = oracle::brute_force_mine(audio_pts, visual_pts, audio,
                                                   visual, labels, 0.3, 2);
        CHECK(oracle::keys_of(got.triplets) == want);

        // synthetic points never anchor
        for (const Triplet& t : got.triplets) {
            CHECK_FALSE(t.anchor.synthetic);
        }
    }
}

TEST_CASE("stage-2 pool is a superset of plain hard mining") {
    Rng data_rng(77);
    const Matrix audio = oracle::random_matrix(12, 4, data_rng);
    const Matrix visual = oracle::random_matrix(12, 4, data_rng);
    std::vector<int> labels(12);
    for (std::size_t i = 0; i < 12; ++i) labels[i] = static_cast<int>(i % 4);

    const MiningResult plain =
        mine_triplets(audio, visual, labels, 0.25, TripletCategory::Hard);
    Rng rng(5);
    const AugmentedBatch batch =
        augment_batch(audio, visual, labels, 2, PairingPolicy{}, rng);
    const MiningResult augmented = mine_hard_augmented(batch, 0.25);

    const auto augmented_keys = oracle::keys_of(augmented.triplets);
    const std::set<oracle::TripletKey> pool(augmented_keys.begin(),
                                            augmented_keys.end());
    for (const Triplet& t : plain.triplets) {
        CHECK(pool.count(oracle::key_of(t)) == 1);
    }
}
