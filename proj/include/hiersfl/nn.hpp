#pragma once

#include <cstdint>
#include <vector>

#include "hiersfl/params.hpp"
#include "hiersfl/tensor.hpp"

namespace hiersfl {

/// A dense feed-forward stack. Hidden layers use ReLU; the final layer is a
/// softmax output trained with cross-entropy.
struct LayerStack {
    std::vector<LayerShape> layers;

    /// Builds a stack from unit counts, e.g. {784, 64, 32, 10}. Every layer
    /// but the last is ReLU; the last is the softmax output.
    static LayerStack dense(const std::vector<size_t>& dims);

    size_t depth() const { return layers.size(); }
    size_t input_dim() const;
    size_t output_dim() const;
    size_t param_count() const { return total_param_count(layers); }

    /// Layers [0, cut) as a standalone stack (all ReLU by construction).
    LayerStack prefix(size_t cut) const;
    /// Layers [cut, depth()) as a standalone stack.
    LayerStack suffix(size_t cut) const;

    void validate() const;
};

/// Result of a forward pass: activations[0] is the input batch,
/// activations[i] the output of layer i-1, activations.back() the
/// class-probability predictions (or the cut activations for a partial
/// stack whose last layer is ReLU).
struct ForwardResult {
    std::vector<Tensor2D> activations;

    const Tensor2D& output() const { return activations.back(); }
};

/// SGD-with-momentum state for one model replica. The epoch counter drives
/// exponential learning-rate decay and survives velocity resets.
struct OptimizerState {
    double learning_rate = 0.01;
    double decay = 1.0;
    double momentum = 0.0;
    size_t epoch = 0;
    std::vector<double> velocity;

    static OptimizerState make(size_t param_count, double learning_rate, double decay,
                               double momentum);

    double effective_rate() const;
    void advance_epoch() { ++epoch; }
    void reset_velocity();
};

/// Glorot-uniform weights, zero biases, deterministic in `seed`.
ParamVector init_params(const LayerStack& stack, uint64_t seed);

ForwardResult forward(const LayerStack& stack, const ParamVector& params, const Tensor2D& batch);

/// Mean cross-entropy over the batch; probabilities are clamped at 1e-12
/// before the log.
double loss_cross_entropy(const Tensor2D& predictions, const std::vector<int>& labels);

/// Gradient of mean cross-entropy w.r.t. the full stack's parameters.
ParamVector backward(const LayerStack& stack, const ParamVector& params, const ForwardResult& fwd,
                     const std::vector<int>& labels);

/// Gradient over a ReLU-terminated partial stack, seeded by the unmasked
/// loss gradient w.r.t. its output activations. The ReLU mask of the final
/// activation is applied here, so the seed must arrive unmasked.
ParamVector backward_from_cut(const LayerStack& stack, const ParamVector& params,
                              const ForwardResult& fwd, const Tensor2D& cut_gradient);

/// Like backward(), but also reports the unmasked loss gradient w.r.t. the
/// stack's input batch. Used by the server half of a split model.
ParamVector backward_with_input_grad(const LayerStack& stack, const ParamVector& params,
                                     const ForwardResult& fwd, const std::vector<int>& labels,
                                     Tensor2D& input_grad);

/// One momentum-SGD update: v <- momentum*v + g; w <- w - rate*v.
void sgd_step(ParamVector& params, const ParamVector& gradient, OptimizerState& opt);

}  // namespace hiersfl
