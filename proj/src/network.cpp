#include "cmr/network.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>

#include "cmr/errors.hpp"

namespace cmr {

ProjectionNetwork::ProjectionNetwork(std::string net_name, std::size_t in_dim,
                                     std::size_t hid_dim, std::size_t n_classes,
                                     std::size_t num_hidden_layers, Rng& rng)
    : name(std::move(net_name)),
      input_dim(in_dim),
      hidden_dim(hid_dim),
      num_classes(n_classes) {
    std::size_t prev = input_dim;
    for (std::size_t i = 0; i < num_hidden_layers; ++i) {
        layers.emplace_back(hidden_dim, prev, Activation::ReLU, rng);
        prev = hidden_dim;
    }
    layers.emplace_back(num_classes, prev, Activation::Identity, rng);
}

Matrix ProjectionNetwork::forward(const Matrix& features,
                                  std::vector<LayerCache>* caches) const {
    if (features.cols != input_dim) {
        throw DimensionError(name + " network expects input dim " +
                             std::to_string(input_dim) + ", got " +
                             std::to_string(features.cols));
    }
    if (caches != nullptr) caches->assign(layers.size(), LayerCache{});
    Matrix x = features;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        x = dense_forward(layers[i], x, caches ? &(*caches)[i] : nullptr);
    }
    return x;
}

void ProjectionNetwork::backward(const std::vector<LayerCache>& caches,
                                 const Matrix& emb_grad) {
    if (caches.size() != layers.size()) {
        throw DimensionError(name + " backward: cache count " +
                             std::to_string(caches.size()) + " != layer count " +
                             std::to_string(layers.size()));
    }
    Matrix g = emb_grad;
    for (std::size_t i = layers.size(); i > 0; --i) {
        g = dense_backward(layers[i - 1], caches[i - 1], g);
    }
}

void ProjectionNetwork::zero_grads() {
    for (DenseLayer& layer : layers) layer.zero_grads();
}

std::vector<ParamSlot> ProjectionNetwork::parameters() {
    std::vector<ParamSlot> slots;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        DenseLayer& layer = layers[i];
        const std::string prefix = name + ".layer" + std::to_string(i);
        slots.push_back({prefix + ".weights",
                         std::span<double>(layer.weights.data),
                         std::span<double>(layer.weight_grad.data)});
        slots.push_back({prefix + ".bias", std::span<double>(layer.bias),
                         std::span<double>(layer.bias_grad)});
    }
    return slots;
}

Matrix project(const ProjectionNetwork& net, const Matrix& features) {
    return net.forward(features, nullptr);
}

std::vector<ParamSlot> ModelPair::parameters() {
    std::vector<ParamSlot> slots = audio_net.parameters();
    std::vector<ParamSlot> vis = visual_net.parameters();
    slots.insert(slots.end(), vis.begin(), vis.end());
    return slots;
}

void ModelPair::zero_grads() {
    audio_net.zero_grads();
    visual_net.zero_grads();
}

ModelPair make_model_pair(std::size_t audio_dim, std::size_t visual_dim,
                          std::size_t hidden_dim, std::size_t num_classes,
                          std::uint64_t seed, std::size_t num_hidden_layers) {
    Rng audio_rng(Rng::mix(seed, 0x0a));
    Rng visual_rng(Rng::mix(seed, 0x0b));
    ModelPair pair;
    pair.audio_net = ProjectionNetwork("audio", audio_dim, hidden_dim,
                                       num_classes, num_hidden_layers, audio_rng);
    pair.visual_net = ProjectionNetwork("visual", visual_dim, hidden_dim,
                                        num_classes, num_hidden_layers, visual_rng);
    return pair;
}

LabelLossResult label_loss(const Matrix& embeddings,
                           const std::vector<int>& labels) {
    const std::size_t batch = embeddings.rows;
    const std::size_t classes = embeddings.cols;
    if (labels.size() != batch) {
        throw DimensionError("label_loss: " + std::to_string(labels.size()) +
                             " labels for batch of " + std::to_string(batch));
    }
    LabelLossResult result;
    result.grad = Matrix(batch, classes);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw DataError("label_loss: label " + std::to_string(y) +
                            " at row " + std::to_string(b) + " outside [0, " +
                            std::to_string(classes) + ")");
        }
        const auto logits = embeddings.row(b);
        double maxv = logits[0];
        for (double v : logits) maxv = std::max(maxv, v);
        double sum = 0.0;
        for (double v : logits) sum += std::exp(v - maxv);
        const double log_sum = std::log(sum) + maxv;
        total += log_sum - logits[static_cast<std::size_t>(y)];
        auto g = result.grad.row(b);
        for (std::size_t c = 0; c < classes; ++c) {
            g[c] = std::exp(logits[c] - log_sum) / static_cast<double>(batch);
        }
        g[static_cast<std::size_t>(y)] -= 1.0 / static_cast<double>(batch);
    }
    result.loss = total / static_cast<double>(batch);
    return result;
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x434d5243;  // "CMRC"
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw DataError("checkpoint '" + path + "': truncated file");
    return v;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, const std::string& path) {
    const std::uint64_t n = read_u64(in, path);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError("checkpoint '" + path + "': truncated payload");
    return v;
}

void write_net(std::ofstream& out, const ProjectionNetwork& net) {
    write_u64(out, net.input_dim);
    write_u64(out, net.hidden_dim);
    write_u64(out, net.num_classes);
    write_u64(out, net.layers.size());
    for (const DenseLayer& layer : net.layers) {
        write_u64(out, layer.out_dim());
        write_u64(out, layer.in_dim());
        write_u64(out, layer.activation == Activation::ReLU ? 1 : 0);
        write_doubles(out, layer.weights.data);
        write_doubles(out, layer.bias);
    }
}

ProjectionNetwork read_net(std::ifstream& in, const std::string& path,
                           std::string name) {
    ProjectionNetwork net;
    net.name = std::move(name);
    net.input_dim = read_u64(in, path);
    net.hidden_dim = read_u64(in, path);
    net.num_classes = read_u64(in, path);
    const std::uint64_t n_layers = read_u64(in, path);
    for (std::uint64_t i = 0; i < n_layers; ++i) {
        DenseLayer layer;
        const std::uint64_t out_dim = read_u64(in, path);
        const std::uint64_t in_dim = read_u64(in, path);
        layer.activation =
            read_u64(in, path) == 1 ? Activation::ReLU : Activation::Identity;
        layer.weights = Matrix(out_dim, in_dim);
        layer.weights.data = read_doubles(in, path);
        if (layer.weights.data.size() != out_dim * in_dim) {
            throw DataError("checkpoint '" + path + "': weight size mismatch");
        }
        layer.bias = read_doubles(in, path);
        if (layer.bias.size() != out_dim) {
            throw DataError("checkpoint '" + path + "': bias size mismatch");
        }
        layer.weight_grad = Matrix(out_dim, in_dim);
        layer.bias_grad.assign(out_dim, 0.0);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace

void save_checkpoint(const ModelPair& models, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open checkpoint '" + path + "' for writing");
    write_u64(out, kCheckpointMagic);
    write_u64(out, kCheckpointVersion);
    write_net(out, models.audio_net);
    write_net(out, models.visual_net);
    if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

ModelPair load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    if (read_u64(in, path) != kCheckpointMagic) {
        throw DataError("checkpoint '" + path + "': bad magic");
    }
    if (read_u64(in, path) != kCheckpointVersion) {
        throw DataError("checkpoint '" + path + "': unsupported version");
    }
    ModelPair pair;
    pair.audio_net = read_net(in, path, "audio");
    pair.visual_net = read_net(in, path, "visual");
    return pair;
}

}  // namespace cmr
