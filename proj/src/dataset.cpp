#include "cmr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cmr/errors.hpp"

namespace cmr {

namespace {

// Gaussian matrix with orthonormal columns (rows >= cols) or orthonormal
// rows (rows < cols), via modified Gram-Schmidt.
Matrix semi_orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
    const bool by_columns = rows >= cols;
    const std::size_t n_vecs = by_columns ? cols : rows;
    const std::size_t dim = by_columns ? rows : cols;

    std::vector<std::vector<double>> vecs(n_vecs, std::vector<double>(dim));
    for (auto& v : vecs) {
        for (double& x : v) x = rng.gaussian();
    }
    for (std::size_t i = 0; i < n_vecs; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += vecs[i][d] * vecs[j][d];
            for (std::size_t d = 0; d < dim; ++d) vecs[i][d] -= dot * vecs[j][d];
        }
        if (!l2_normalize(vecs[i])) {
            // astronomically unlikely; retry with fresh noise
            for (double& x : vecs[i]) x = rng.gaussian();
            --i;
        }
    }

    Matrix q(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            q.at(r, c) = by_columns ? vecs[c][r] : vecs[r][c];
        }
    }
    return q;
}

}  // namespace

DataView subset(const PairedDataset& ds, Split which) {
    if (ds.split.size() != ds.size()) {
        throw DataError("subset: dataset has no split assignment");
    }
    DataView view;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.split[i] == which) view.source_rows.push_back(static_cast<int>(i));
    }
    view.audio = ds.audio.take_rows(view.source_rows);
    view.visual = ds.visual.take_rows(view.source_rows);
    for (int r : view.source_rows) {
        view.labels.push_back(ds.labels[static_cast<std::size_t>(r)]);
        view.ids.push_back(ds.ids[static_cast<std::size_t>(r)]);
    }
    return view;
}

PairedDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) {
        throw DataError("generate_synthetic: need at least 2 classes, got " +
                        std::to_string(spec.num_classes));
    }
    if (spec.n_pairs < static_cast<std::size_t>(spec.num_classes)) {
        throw DataError("generate_synthetic: n_pairs (" +
                        std::to_string(spec.n_pairs) +
                        ") must be >= num_classes (" +
                        std::to_string(spec.num_classes) +
                        ") so every class is populated");
    }
    if (spec.cluster_spread <= 0.0) {
        throw DataError("generate_synthetic: cluster_spread must be positive");
    }
    if (spec.noise_scale < 0.0) {
        throw DataError("generate_synthetic: noise_scale must be >= 0");
    }

    Rng rng(spec.seed);
    const std::size_t c = static_cast<std::size_t>(spec.num_classes);

    Matrix centroids(c, spec.audio_dim);
    for (double& v : centroids.data) v = spec.cluster_spread * rng.gaussian();

    const Matrix rot = semi_orthogonal(spec.visual_dim, spec.audio_dim, rng);
    Matrix visual_centroids(c, spec.visual_dim);
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t r = 0; r < spec.visual_dim; ++r) {
            double acc = 0.0;
            for (std::size_t d = 0; d < spec.audio_dim; ++d) {
                acc += rot.at(r, d) * centroids.at(k, d);
            }
            visual_centroids.at(k, r) = acc;
        }
    }

    PairedDataset ds;
    ds.num_classes = spec.num_classes;
    ds.labels.resize(spec.n_pairs);
    for (std::size_t i = 0; i < spec.n_pairs; ++i) {
        ds.labels[i] = static_cast<int>(i % c);
    }
    rng.shuffle(ds.labels);

    ds.audio = Matrix(spec.n_pairs, spec.audio_dim);
    ds.visual = Matrix(spec.n_pairs, spec.visual_dim);
    ds.ids.resize(spec.n_pairs);
    for (std::size_t i = 0; i < spec.n_pairs; ++i) {
        ds.ids[i] = static_cast<long>(i);
        const std::size_t k = static_cast<std::size_t>(ds.labels[i]);
        for (std::size_t d = 0; d < spec.audio_dim; ++d) {
            ds.audio.at(i, d) = centroids.at(k, d) + spec.noise_scale * rng.gaussian();
        }
        for (std::size_t d = 0; d < spec.visual_dim; ++d) {
            ds.visual.at(i, d) =
                visual_centroids.at(k, d) + spec.noise_scale * rng.gaussian();
        }
    }
    return ds;
}

void save_features_csv(const std::string& path, const Matrix& features,
                       const std::vector<long>& ids,
                       const std::vector<int>& labels,
                       const std::vector<std::pair<std::string, std::string>>&
                           config_echo) {
    if (features.rows != ids.size() || features.rows != labels.size()) {
        throw DimensionError("save_features_csv: row/id/label count mismatch");
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    for (const auto& [key, value] : config_echo) {
        out << "# " << key << "=" << value << "\n";
    }
    out << "id,label";
    for (std::size_t d = 0; d < features.cols; ++d) out << ",f" << d;
    out << "\n";
    char buf[40];
    for (std::size_t r = 0; r < features.rows; ++r) {
        out << ids[r] << ',' << labels[r];
        for (std::size_t d = 0; d < features.cols; ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g", features.at(r, d));
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

long parse_long(const std::string& s, const std::string& path, std::size_t line,
                const char* what) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') {
        throw DataError(path + ":" + std::to_string(line) + ": " + what + " '" +
                        s + "' is not an integer");
    }
    return v;
}

double parse_double(const std::string& s, const std::string& path,
                    std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw DataError(path + ":" + std::to_string(line) + ": feature '" + s +
                        "' is not a number");
    }
    return v;
}

}  // namespace

std::vector<Sample> load_features(const std::string& path, Modality modality,
                                  std::optional<std::size_t> expected_dim) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature file '" + path + "'");

    std::string line;
    std::size_t header_line = 0;
    // leading '# ...' lines are a config echo, not data
    do {
        if (!std::getline(in, line)) {
            throw DataError(path + ": empty file");
        }
        ++header_line;
    } while (!line.empty() && line[0] == '#');
    const auto header = split_fields(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
        throw DataError(path + ":" + std::to_string(header_line) +
                        ": header must be id,label,f0,...");
    }
    const std::size_t dim = header.size() - 2;
    for (std::size_t d = 0; d < dim; ++d) {
        if (header[d + 2] != "f" + std::to_string(d)) {
            throw DataError(path + ":" + std::to_string(header_line) +
                            ": unexpected header column '" + header[d + 2] + "'");
        }
    }
    if (expected_dim && dim != *expected_dim) {
        throw DataError(path + ": feature dim " + std::to_string(dim) +
                        " does not match expected " +
                        std::to_string(*expected_dim));
    }

    std::vector<Sample> samples;
    std::size_t line_no = header_line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != dim + 2) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(dim + 2) + " fields, got " +
                            std::to_string(fields.size()));
        }
        Sample s;
        s.modality = modality;
        s.id = parse_long(fields[0], path, line_no, "id");
        s.label = static_cast<int>(parse_long(fields[1], path, line_no, "label"));
        if (s.label < 0) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": label must be >= 0");
        }
        s.features.reserve(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            s.features.push_back(parse_double(fields[d + 2], path, line_no));
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "audio=" << manifest.audio_path << "\n";
    out << "visual=" << manifest.visual_path << "\n";
    out << "classes=" << manifest.num_classes << "\n";
    out << "audio_dim=" << manifest.audio_dim << "\n";
    out << "visual_dim=" << manifest.visual_dim << "\n";
    out << "n_pairs=" << manifest.n_pairs << "\n";
    if (!out) throw DataError("write failed for '" + path + "'");
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path + "'");
    DatasetManifest m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": expected key=value");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "audio") {
            m.audio_path = value;
        } else if (key == "visual") {
            m.visual_path = value;
        } else if (key == "classes") {
            m.num_classes = static_cast<int>(parse_long(value, path, line_no, "classes"));
        } else if (key == "audio_dim") {
            m.audio_dim = static_cast<std::size_t>(parse_long(value, path, line_no, "audio_dim"));
        } else if (key == "visual_dim") {
            m.visual_dim = static_cast<std::size_t>(parse_long(value, path, line_no, "visual_dim"));
        } else if (key == "n_pairs") {
            m.n_pairs = static_cast<std::size_t>(parse_long(value, path, line_no, "n_pairs"));
        } else {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": unknown manifest key '" + key + "'");
        }
    }
    if (m.audio_path.empty() || m.visual_path.empty()) {
        throw DataError(path + ": manifest must name audio and visual files");
    }
    if (m.num_classes < 2) {
        throw DataError(path + ": manifest needs classes >= 2");
    }
    return m;
}

PairedDataset load_dataset(const std::string& manifest_path) {
    const DatasetManifest m = load_manifest(manifest_path);
    const auto base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    auto audio = load_features(resolve(m.audio_path), Modality::Audio,
                               m.audio_dim ? std::optional(m.audio_dim)
                                           : std::nullopt);
    auto visual = load_features(resolve(m.visual_path), Modality::Visual,
                                m.visual_dim ? std::optional(m.visual_dim)
                                             : std::nullopt);
    if (audio.empty() || visual.empty()) {
        throw DataError(manifest_path + ": dataset is empty");
    }
    if (audio.size() != visual.size()) {
        throw DataError(manifest_path + ": modality sizes differ (" +
                        std::to_string(audio.size()) + " audio vs " +
                        std::to_string(visual.size()) + " visual)");
    }
    auto by_id = [](const Sample& a, const Sample& b) { return a.id < b.id; };
    std::sort(audio.begin(), audio.end(), by_id);
    std::sort(visual.begin(), visual.end(), by_id);

    PairedDataset ds;
    ds.num_classes = m.num_classes;
    const std::size_t n = audio.size();
    ds.audio = Matrix(n, audio[0].features.size());
    ds.visual = Matrix(n, visual[0].features.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (audio[i].id != visual[i].id) {
            throw DataError(manifest_path + ": unpaired id " +
                            std::to_string(audio[i].id) + " / " +
                            std::to_string(visual[i].id));
        }
        if (audio[i].label != visual[i].label) {
            throw DataError(manifest_path + ": label mismatch for id " +
                            std::to_string(audio[i].id));
        }
        if (audio[i].label >= m.num_classes) {
            throw DataError(manifest_path + ": label " +
                            std::to_string(audio[i].label) + " for id " +
                            std::to_string(audio[i].id) + " outside [0, " +
                            std::to_string(m.num_classes) + ")");
        }
        if (audio[i].features.size() != ds.audio.cols ||
            visual[i].features.size() != ds.visual.cols) {
            throw DataError(manifest_path + ": inconsistent feature dim at id " +
                            std::to_string(audio[i].id));
        }
        std::copy(audio[i].features.begin(), audio[i].features.end(),
                  ds.audio.row(i).begin());
        std::copy(visual[i].features.begin(), visual[i].features.end(),
                  ds.visual.row(i).begin());
        ds.labels.push_back(audio[i].label);
        ds.ids.push_back(audio[i].id);
    }
    return ds;
}

void stratified_split(PairedDataset& ds, double train_fraction,
                      std::uint64_t seed,
                      std::vector<std::string>* advisories) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DataError("split: train_fraction must be in (0, 1), got " +
                        std::to_string(train_fraction));
    }
    const std::size_t n = ds.size();
    std::map<int, std::vector<int>> members;
    for (std::size_t i = 0; i < n; ++i) {
        members[ds.labels[i]].push_back(static_cast<int>(i));
    }

    // Largest-remainder allocation of round(frac*n) train slots across
    // classes, then clamps so every class with >= 2 members hits both splits.
    const long target = std::lround(train_fraction * static_cast<double>(n));
    std::vector<std::pair<double, int>> remainders;  // (-remainder, class)
    std::map<int, long> quota;
    long assigned = 0;
    for (const auto& [label, rows] : members) {
        const double exact = train_fraction * static_cast<double>(rows.size());
        quota[label] = static_cast<long>(std::floor(exact));
        assigned += quota[label];
        remainders.push_back({-(exact - std::floor(exact)), label});
    }
    std::sort(remainders.begin(), remainders.end());
    const long extras = target - assigned;
    for (long e = 0; e < extras; ++e) {
        quota[remainders[static_cast<std::size_t>(e)].second] += 1;
    }

    Rng rng(Rng::mix(seed, 0x51));
    ds.split.assign(n, Split::Test);
    for (auto& [label, rows] : members) {
        long q = quota[label];
        const long m = static_cast<long>(rows.size());
        if (m == 1) {
            ds.split[static_cast<std::size_t>(rows[0])] = Split::Train;
            if (advisories != nullptr) {
                advisories->push_back("class " + std::to_string(label) +
                                      " has a single member; assigned to train");
            }
            continue;
        }
        q = std::clamp<long>(q, 1, m - 1);
        rng.shuffle(rows);
        for (long i = 0; i < q; ++i) {
            ds.split[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] =
                Split::Train;
        }
    }
}

}  // namespace cmr
