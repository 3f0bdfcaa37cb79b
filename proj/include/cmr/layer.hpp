#pragma once

#include <string>
#include <vector>

#include "cmr/matrix.hpp"

namespace cmr {

enum class Activation { ReLU, Identity };

// One fully connected layer. Gradients live next to the parameters they
// belong to and are accumulated by dense_backward.
struct DenseLayer {
    Matrix weights;  // out x in
    std::vector<double> bias;
    Activation activation = Activation::Identity;

    Matrix weight_grad;
    std::vector<double> bias_grad;

    DenseLayer() = default;
    DenseLayer(std::size_t out_dim, std::size_t in_dim, Activation act, Rng& rng);

    std::size_t in_dim() const { return weights.cols; }
    std::size_t out_dim() const { return weights.rows; }

    void zero_grads();
};

// Forward/backward need the forward-pass input and pre-activation.
struct LayerCache {
    Matrix input;
    Matrix preact;
};

// output = activation(input * W^T + bias), batch-major.
Matrix dense_forward(const DenseLayer& layer, const Matrix& input,
                     LayerCache* cache = nullptr);

// Accumulates dL/dW and dL/db into the layer, returns dL/dinput.
// ReLU subgradient at 0 is taken as 0.
Matrix dense_backward(DenseLayer& layer, const LayerCache& cache,
                      const Matrix& upstream_grad);

}  // namespace cmr
