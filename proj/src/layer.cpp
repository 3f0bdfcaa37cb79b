#include "cmr/layer.hpp"

#include <cstdio>

#include "cmr/errors.hpp"

namespace cmr {

namespace {

std::string shape_str(const Matrix& m) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zux%zu", m.rows, m.cols);
    return buf;
}

}  // namespace

DenseLayer::DenseLayer(std::size_t out_dim, std::size_t in_dim, Activation act,
                       Rng& rng)
    : weights(glorot_uniform(out_dim, in_dim, rng)),
      bias(out_dim, 0.0),
      activation(act),
      weight_grad(out_dim, in_dim),
      bias_grad(out_dim, 0.0) {}

void DenseLayer::zero_grads() {
    weight_grad.fill(0.0);
    std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& input,
                     LayerCache* cache) {
    if (input.cols != layer.in_dim()) {
        throw DimensionError("dense_forward: input shape " + shape_str(input) +
                             " does not match weights " + shape_str(layer.weights));
    }
    const std::size_t batch = input.rows;
    const std::size_t out = layer.out_dim();
    const std::size_t in = layer.in_dim();

    Matrix preact(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = input.data.data() + b * in;
        double* z = preact.data.data() + b * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* w = layer.weights.data.data() + o * in;
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
            z[o] = acc;
        }
    }

    Matrix output = preact;
    if (layer.activation == Activation::ReLU) {
        for (double& v : output.data) {
            if (v <= 0.0) v = 0.0;
        }
    }
    if (cache != nullptr) {
        cache->input = input;
        cache->preact = std::move(preact);
    }
    return output;
}

Matrix dense_backward(DenseLayer& layer, const LayerCache& cache,
                      const Matrix& upstream_grad) {
    const std::size_t batch = cache.input.rows;
    const std::size_t out = layer.out_dim();
    const std::size_t in = layer.in_dim();
    if (upstream_grad.rows != batch || upstream_grad.cols != out) {
        throw DimensionError("dense_backward: upstream grad " +
                             shape_str(upstream_grad) + " does not match batch " +
                             shape_str(cache.input) + " and weights " +
                             shape_str(layer.weights));
    }

    // dz = upstream ⊙ act'(preact)
    Matrix dz = upstream_grad;
    if (layer.activation == Activation::ReLU) {
        for (std::size_t i = 0; i < dz.data.size(); ++i) {
            if (cache.preact.data[i] <= 0.0) dz.data[i] = 0.0;
        }
    }

    Matrix input_grad(batch, in);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = cache.input.data.data() + b * in;
        const double* g = dz.data.data() + b * out;
        double* dx = input_grad.data.data() + b * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            double* dw = layer.weight_grad.data.data() + o * in;
            const double* w = layer.weights.data.data() + o * in;
            layer.bias_grad[o] += go;
            for (std::size_t i = 0; i < in; ++i) {
                dw[i] += go * x[i];
                dx[i] += go * w[i];
            }
        }
    }
    return input_grad;
}

}  // namespace cmr
