#include "cmr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cmr/errors.hpp"

namespace cmr {

namespace {

double similarity_score(std::span<const double> a, std::span<const double> b,
                        Similarity sim) {
    if (sim == Similarity::NegEuclidean) return -distance(a, b);
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na <= 1e-12 || nb <= 1e-12) return 0.0;
    return dot / (na * nb);
}

}  // namespace

RankedList rank_gallery(std::span<const double> query_emb, const Matrix& gallery,
                        Similarity sim) {
    if (gallery.rows == 0) throw DataError("rank_gallery: empty gallery");
    if (gallery.cols != query_emb.size()) {
        throw DimensionError("rank_gallery: query dim " +
                             std::to_string(query_emb.size()) +
                             " vs gallery dim " + std::to_string(gallery.cols));
    }
    std::vector<double> scores(gallery.rows);
    for (std::size_t g = 0; g < gallery.rows; ++g) {
        scores[g] = similarity_score(query_emb, gallery.row(g), sim);
    }
    RankedList list;
    list.ranking.resize(gallery.rows);
    std::iota(list.ranking.begin(), list.ranking.end(), 0);
    std::sort(list.ranking.begin(), list.ranking.end(), [&](int a, int b) {
        const double sa = scores[static_cast<std::size_t>(a)];
        const double sb = scores[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    return list;
}

ApResult average_precision(const std::vector<char>& relevance,
                           std::optional<std::size_t> k) {
    ApResult result;
    std::size_t total_relevant = 0;
    for (char r : relevance) total_relevant += (r != 0);
    if (total_relevant == 0) {
        result.no_relevant_advisory = true;
        return result;
    }
    const std::size_t scan = k ? std::min(*k, relevance.size()) : relevance.size();
    const std::size_t norm = k ? std::min(total_relevant, *k) : total_relevant;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scan; ++i) {
        if (relevance[i] != 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    result.ap = sum / static_cast<double>(norm);
    return result;
}

DirectionReport mean_average_precision(const Matrix& query_embs,
                                       const std::vector<int>& query_labels,
                                       const Matrix& gallery_embs,
                                       const std::vector<int>& gallery_labels,
                                       const std::string& direction,
                                       Similarity sim) {
    if (query_embs.rows == 0 || gallery_embs.rows == 0) {
        throw DataError("mean_average_precision: empty query or gallery side");
    }
    DirectionReport report;
    report.direction = direction;
    double total = 0.0;
    for (std::size_t q = 0; q < query_embs.rows; ++q) {
        RankedList list = rank_gallery(query_embs.row(q), gallery_embs, sim);
        list.query_label = query_labels[q];
        list.relevance.resize(list.ranking.size());
        for (std::size_t r = 0; r < list.ranking.size(); ++r) {
            list.relevance[r] =
                gallery_labels[static_cast<std::size_t>(list.ranking[r])] ==
                list.query_label;
        }
        const ApResult ap = average_precision(list.relevance);
        if (ap.no_relevant_advisory) ++report.queries_without_relevant;
        report.per_query_ap.push_back(ap.ap);
        total += ap.ap;
    }
    report.map = total / static_cast<double>(query_embs.rows);
    return report;
}

RetrievalReport evaluate_bidirectional(const Matrix& audio_embs,
                                       const Matrix& visual_embs,
                                       const std::vector<int>& labels,
                                       Similarity sim) {
    RetrievalReport report;
    report.audio_to_visual = mean_average_precision(audio_embs, labels,
                                                    visual_embs, labels, "a2v",
                                                    sim);
    report.visual_to_audio = mean_average_precision(visual_embs, labels,
                                                    audio_embs, labels, "v2a",
                                                    sim);
    report.map_average =
        0.5 * (report.audio_to_visual.map + report.visual_to_audio.map);
    return report;
}

std::string case_study(std::span<const double> query_emb, int query_label,
                       long query_id, const Matrix& gallery,
                       const std::vector<int>& gallery_labels,
                       const std::vector<long>& gallery_ids, std::size_t k,
                       Similarity sim) {
    if (k > gallery.rows) {
        throw DataError("case_study: k (" + std::to_string(k) +
                        ") exceeds gallery size (" + std::to_string(gallery.rows) +
                        ")");
    }
    const RankedList list = rank_gallery(query_emb, gallery, sim);
    std::vector<char> relevance(list.ranking.size());
    for (std::size_t r = 0; r < list.ranking.size(); ++r) {
        relevance[r] =
            gallery_labels[static_cast<std::size_t>(list.ranking[r])] ==
            query_label;
    }
    const ApResult ap = average_precision(relevance, k);

    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", ap.ap);
    out << "query id=" << query_id << " label=" << query_label << " AP@" << k
        << "=" << buf << "\n";
    for (std::size_t r = 0; r < k; ++r) {
        const int g = list.ranking[r];
        const double score =
            similarity_score(query_emb, gallery.row(static_cast<std::size_t>(g)),
                             sim);
        std::snprintf(buf, sizeof(buf), "%.6f", score);
        out << "  " << (r + 1) << ". id=" << gallery_ids[static_cast<std::size_t>(g)]
            << " label=" << gallery_labels[static_cast<std::size_t>(g)]
            << " score=" << buf << " "
            << (relevance[r] ? "[match]" : "[mismatch]") << "\n";
    }
    return out.str();
}

}  // namespace cmr
