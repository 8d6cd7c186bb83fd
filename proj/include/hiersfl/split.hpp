#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "hiersfl/nn.hpp"
#include "hiersfl/params.hpp"
#include "hiersfl/tensor.hpp"

namespace hiersfl {

/// A model split at a layer boundary: layers [0, cut_index) run on the
/// client, layers [cut_index, depth) on the server. The cut always lands
/// between two layers, so the client half ends in ReLU and the server half
/// contains the softmax output.
struct SplitSpec {
    size_t cut_index = 0;
    LayerStack client_stack;
    LayerStack server_stack;
};

SplitSpec make_split(const LayerStack& stack, size_t cut_index);

/// Cut activations plus the labels the server needs to compute the loss.
/// Transfer size counts every double at 8 bytes and each label as one
/// 8-byte integer.
struct SmashedData {
    Tensor2D activations{0, 0};
    std::vector<int> labels;

    size_t byte_size() const { return (activations.data.size() + labels.size()) * 8; }
};

/// Loss gradient w.r.t. the cut activations, before the client-side ReLU
/// mask.
struct CutGradient {
    Tensor2D grad{0, 0};

    size_t byte_size() const { return grad.data.size() * 8; }
};

/// Client half of one training step: forward to the cut, then package the
/// smashed data. The forward result is kept for the backward half.
struct ClientForward {
    ForwardResult fwd;
    SmashedData smashed;
};

ClientForward client_forward(const SplitSpec& split, const ParamVector& client_params,
                             const Tensor2D& batch, const std::vector<int>& labels);

/// Server half: forward from the cut, loss, and backward down to the cut.
struct ServerStepResult {
    double loss = 0.0;
    CutGradient cut_gradient;
    ParamVector gradient;
    Tensor2D predictions{0, 0};
};

ServerStepResult server_forward_backward(const SplitSpec& split, const ParamVector& server_params,
                                         const SmashedData& smashed);

/// Client backward seeded by the server's cut gradient.
ParamVector client_backward(const SplitSpec& split, const ParamVector& client_params,
                            const ClientForward& cached, const CutGradient& cut_gradient);

/// Slices a full model's parameters into (client half, server half).
std::pair<ParamVector, ParamVector> split_params(const SplitSpec& split, const ParamVector& full);

/// Inverse of split_params.
ParamVector join_params(const SplitSpec& split, const ParamVector& client,
                        const ParamVector& server);

}  // namespace hiersfl
