#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "c2a/rng.hpp"
#include "c2a/tensor.hpp"

namespace c2a {

// Fully-connected layer with explicit gradient buffers. Backward calls
// accumulate into grad_weight/grad_bias; the optimizer zeroes them.
struct LinearLayer {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    Tensor weight;       // out_dim x in_dim
    Tensor bias;         // out_dim
    Tensor grad_weight;  // same shape as weight
    Tensor grad_bias;    // same shape as bias

    LinearLayer() = default;

    LinearLayer(std::size_t in, std::size_t out)
        : in_dim(in),
          out_dim(out),
          weight({out, in}),
          bias({out}),
          grad_weight({out, in}),
          grad_bias({out}) {}

    // Uniform in +-sqrt(6/(in+out)), biases zero.
    void init(SplitMix64& rng) {
        const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
        for (double& w : weight.data) w = rng.uniform(-bound, bound);
        bias.fill(0.0);
        grad_weight.fill(0.0);
        grad_bias.fill(0.0);
    }

    void zero_grad() {
        grad_weight.fill(0.0);
        grad_bias.fill(0.0);
    }

    // x: batch x in_dim -> batch x out_dim
    Tensor forward(const Tensor& x) const {
        if (x.rank() != 2 || x.dims[1] != in_dim)
            throw shape_error("linear_forward: input " + dims_to_string(x.dims) + " vs weight " +
                              dims_to_string(weight.dims));
        const std::size_t batch = x.dims[0];
        Tensor out({batch, out_dim});
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xb = &x.data[b * in_dim];
            double* ob = &out.data[b * out_dim];
            for (std::size_t o = 0; o < out_dim; ++o) {
                double acc = bias[o];
                const double* wo = &weight.data[o * in_dim];
                for (std::size_t i = 0; i < in_dim; ++i) acc += wo[i] * xb[i];
                ob[o] = acc;
            }
        }
        return out;
    }

    // grad_in = grad_out . weight, leaving parameter grads untouched.
    Tensor input_grad(const Tensor& grad_out) const {
        if (grad_out.rank() != 2 || grad_out.dims[1] != out_dim)
            throw shape_error("linear input_grad: grad_out " + dims_to_string(grad_out.dims));
        const std::size_t batch = grad_out.dims[0];
        Tensor grad_in({batch, in_dim});
        for (std::size_t b = 0; b < batch; ++b) {
            const double* gb = &grad_out.data[b * out_dim];
            double* ib = &grad_in.data[b * in_dim];
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double g = gb[o];
                const double* wo = &weight.data[o * in_dim];
                for (std::size_t i = 0; i < in_dim; ++i) ib[i] += g * wo[i];
            }
        }
        return grad_in;
    }

    // Accumulates grad_weight += grad_out^T x, grad_bias += sum_b grad_out;
    // returns grad_in = grad_out . weight.
    Tensor backward(const Tensor& x, const Tensor& grad_out) {
        if (x.rank() != 2 || x.dims[1] != in_dim)
            throw shape_error("linear_backward: input " + dims_to_string(x.dims) + " vs weight " +
                              dims_to_string(weight.dims));
        if (grad_out.rank() != 2 || grad_out.dims[0] != x.dims[0] || grad_out.dims[1] != out_dim)
            throw shape_error("linear_backward: grad_out " + dims_to_string(grad_out.dims) +
                              " vs expected (" + std::to_string(x.dims[0]) + ", " +
                              std::to_string(out_dim) + ")");
        const std::size_t batch = x.dims[0];
        Tensor grad_in({batch, in_dim});
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xb = &x.data[b * in_dim];
            const double* gb = &grad_out.data[b * out_dim];
            double* ib = &grad_in.data[b * in_dim];
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double g = gb[o];
                grad_bias[o] += g;
                double* wgo = &grad_weight.data[o * in_dim];
                const double* wo = &weight.data[o * in_dim];
                for (std::size_t i = 0; i < in_dim; ++i) {
                    wgo[i] += g * xb[i];
                    ib[i] += g * wo[i];
                }
            }
        }
        return grad_in;
    }
};

// max(x, slope*x) elementwise. The subgradient at 0 is slope.
inline Tensor leaky_relu_forward(const Tensor& x, double slope) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : slope * v;
    return out;
}

inline Tensor leaky_relu_backward(const Tensor& x, const Tensor& grad_out, double slope) {
    require_same_shape(x, grad_out, "leaky_relu_backward");
    Tensor grad_in = grad_out;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] <= 0.0) grad_in[i] *= slope;
    return grad_in;
}

// argmax within one row of a 2-D tensor, ties broken by lowest index.
inline std::size_t argmax_row(const Tensor& t, std::size_t row) {
    const std::size_t k = t.dims[1];
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (t.at(row, j) > t.at(row, best)) best = j;
    return best;
}

// Max-shifted softmax over the last axis.
inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() == 0 || logits.dims.back() == 0)
        throw shape_error("softmax: empty last axis");
    const std::size_t k = logits.dims.back();
    const std::size_t rows = logits.size() / k;
    Tensor out = logits;
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = &out.data[r * k];
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - m);
            sum += row[j];
        }
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    }
    return out;
}

// d(logits) given d(softmax output), rowwise: p .* (g - <g,p>).
inline Tensor softmax_backward(const Tensor& probs, const Tensor& grad_out) {
    require_same_shape(probs, grad_out, "softmax_backward");
    const std::size_t k = probs.dims.back();
    const std::size_t rows = probs.size() / k;
    Tensor grad_in = probs;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* p = &probs.data[r * k];
        const double* g = &grad_out.data[r * k];
        double* out = &grad_in.data[r * k];
        double gp = 0.0;
        for (std::size_t j = 0; j < k; ++j) gp += g[j] * p[j];
        for (std::size_t j = 0; j < k; ++j) out[j] = p[j] * (g[j] - gp);
    }
    return grad_in;
}

}  // namespace c2a
