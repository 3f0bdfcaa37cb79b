#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmr/matrix.hpp"
#include "cmr/triplet.hpp"

namespace cmr {

enum class Split { Train, Test };

struct Sample {
    long id = 0;
    Modality modality = Modality::Audio;
    std::vector<double> features;
    int label = 0;
};

// Aligned audio/visual pairs sharing labels, ordered by ascending id.
struct PairedDataset {
    Matrix audio;   // n x audio_dim
    Matrix visual;  // n x visual_dim
    std::vector<int> labels;
    std::vector<long> ids;
    int num_classes = 0;
    std::vector<Split> split;  // empty until a split is assigned

    std::size_t size() const { return labels.size(); }
};

// A materialized subset of a dataset (one side of a split).
struct DataView {
    Matrix audio;
    Matrix visual;
    std::vector<int> labels;
    std::vector<long> ids;
    std::vector<int> source_rows;

    std::size_t size() const { return labels.size(); }
};

DataView subset(const PairedDataset& ds, Split which);

// Desk-scale stand-in for precomputed audio/visual features: per class one
// centroid; audio features are noisy copies of it, visual features noisy
// copies of a fixed semi-orthogonal transform of it, so both modalities
// share semantics in different coordinate systems.
struct SyntheticSpec {
    std::size_t n_pairs = 200;
    int num_classes = 5;
    std::size_t audio_dim = 16;
    std::size_t visual_dim = 24;
    double cluster_spread = 1.0;
    double noise_scale = 0.3;
    std::uint64_t seed = 7;
};

PairedDataset generate_synthetic(const SyntheticSpec& spec);

// Feature CSV: header `id,label,f0,...,f{d-1}`, one file per modality,
// values printed with enough digits to round-trip bit-exactly. Optional
// `# key=value` echo lines precede the header; the loader skips them.
void save_features_csv(const std::string& path, const Matrix& features,
                       const std::vector<long>& ids,
                       const std::vector<int>& labels,
                       const std::vector<std::pair<std::string, std::string>>&
                           config_echo = {});

std::vector<Sample> load_features(const std::string& path, Modality modality,
                                  std::optional<std::size_t> expected_dim = {});

// Plain-text key=value manifest naming both modality files and shapes.
struct DatasetManifest {
    std::string audio_path;
    std::string visual_path;
    int num_classes = 0;
    std::size_t audio_dim = 0;
    std::size_t visual_dim = 0;
    std::size_t n_pairs = 0;
};

void save_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);

// Loads both feature files named by a manifest (paths resolved relative to
// the manifest), pairs samples by id and validates labels.
PairedDataset load_dataset(const std::string& manifest_path);

// Stratified train/test assignment: every class with >= 2 members appears in
// both splits; pairs stay intact; deterministic per seed. Single-member
// classes go to train with an advisory.
void stratified_split(PairedDataset& ds, double train_fraction,
                      std::uint64_t seed,
                      std::vector<std::string>* advisories = nullptr);

}  // namespace cmr
