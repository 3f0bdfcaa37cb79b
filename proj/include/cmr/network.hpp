#pragma once

#include <string>
#include <vector>

#include "cmr/layer.hpp"
#include "cmr/optimizer.hpp"

namespace cmr {

// Projection stack for one modality: hidden ReLU layers followed by an
// identity label head whose output lives in the common label space
// (one coordinate per class, pre-softmax). Triplet distances are taken on
// these raw label-space embeddings.
struct ProjectionNetwork {
    std::string name;  // "audio" / "visual"; used in error messages
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t num_classes = 0;
    std::vector<DenseLayer> layers;

    ProjectionNetwork() = default;
    ProjectionNetwork(std::string name, std::size_t input_dim,
                      std::size_t hidden_dim, std::size_t num_classes,
                      std::size_t num_hidden_layers, Rng& rng);

    Matrix forward(const Matrix& features, std::vector<LayerCache>* caches) const;

    // Backprop of dL/d(embedding); accumulates parameter gradients.
    void backward(const std::vector<LayerCache>& caches, const Matrix& emb_grad);

    void zero_grads();
    std::vector<ParamSlot> parameters();
};

// Projects a feature batch into the common label space.
Matrix project(const ProjectionNetwork& net, const Matrix& features);

struct ModelPair {
    ProjectionNetwork audio_net;
    ProjectionNetwork visual_net;

    std::vector<ParamSlot> parameters();
    void zero_grads();
};

// Builds both nets with the default 3-hidden-layer shape from one seed.
ModelPair make_model_pair(std::size_t audio_dim, std::size_t visual_dim,
                          std::size_t hidden_dim, std::size_t num_classes,
                          std::uint64_t seed, std::size_t num_hidden_layers = 3);

struct LabelLossResult {
    double loss = 0.0;
    Matrix grad;  // (softmax - onehot) / batch
};

// Mean softmax cross-entropy of label-space embeddings against class labels.
LabelLossResult label_loss(const Matrix& embeddings, const std::vector<int>& labels);

// Binary checkpoint container: shapes first, then parameters in layer order.
// Round-trips bit-exactly.
void save_checkpoint(const ModelPair& models, const std::string& path);
ModelPair load_checkpoint(const std::string& path);

}  // namespace cmr
