#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmr/matrix.hpp"
#include "cmr/triplet.hpp"

namespace cmr {

enum class Similarity { NegEuclidean, Cosine };

// Full gallery ranking for one query, most similar first. Ties break toward
// the smaller gallery index.
struct RankedList {
    Modality query_modality = Modality::Audio;
    int query_index = 0;
    int query_label = 0;
    std::vector<int> ranking;       // permutation of gallery indices
    std::vector<char> relevance;    // relevance[r] = 1 iff ranking[r] matches
};

RankedList rank_gallery(std::span<const double> query_emb, const Matrix& gallery,
                        Similarity sim = Similarity::NegEuclidean);

// Average precision over a relevance bitstring. With a cutoff, the scan is
// truncated at rank k and the normalizer is min(R, k) where R is the number
// of relevant items in the full list. Queries with no relevant item score 0
// and raise the advisory flag.
struct ApResult {
    double ap = 0.0;
    bool no_relevant_advisory = false;
};

ApResult average_precision(const std::vector<char>& relevance,
                           std::optional<std::size_t> k = std::nullopt);

struct DirectionReport {
    std::string direction;  // "a2v" / "v2a"
    std::vector<double> per_query_ap;
    double map = 0.0;
    long queries_without_relevant = 0;
};

struct RetrievalReport {
    DirectionReport audio_to_visual;
    DirectionReport visual_to_audio;
    double map_average = 0.0;
};

// MAP over one direction: every query embedding ranked against the whole
// gallery of the other modality, full-list AP, mean over queries.
DirectionReport mean_average_precision(const Matrix& query_embs,
                                       const std::vector<int>& query_labels,
                                       const Matrix& gallery_embs,
                                       const std::vector<int>& gallery_labels,
                                       const std::string& direction,
                                       Similarity sim = Similarity::NegEuclidean);

// Both directions plus their average.
RetrievalReport evaluate_bidirectional(const Matrix& audio_embs,
                                       const Matrix& visual_embs,
                                       const std::vector<int>& labels,
                                       Similarity sim = Similarity::NegEuclidean);

// Textual top-k dump for one query: a header line with the query and its
// AP@k, then one line per retrieved item with a match/mismatch mark.
std::string case_study(std::span<const double> query_emb, int query_label,
                       long query_id, const Matrix& gallery,
                       const std::vector<int>& gallery_labels,
                       const std::vector<long>& gallery_ids, std::size_t k,
                       Similarity sim = Similarity::NegEuclidean);

}  // namespace cmr
