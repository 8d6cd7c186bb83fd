#include "hiersfl/split.hpp"

#include <string>

#include "hiersfl/errors.hpp"

namespace hiersfl {

SplitSpec make_split(const LayerStack& stack, size_t cut_index) {
    stack.validate();
    if (stack.layers.back().activation != Activation::SoftmaxOutput) {
        throw InputError("make_split: stack must end in the softmax output");
    }
    if (cut_index == 0 || cut_index >= stack.depth()) {
        throw InputError("make_split: cut index " + std::to_string(cut_index) +
                         " outside [1, " + std::to_string(stack.depth() - 1) + "]");
    }
    SplitSpec s;
    s.cut_index = cut_index;
    s.client_stack.layers.assign(stack.layers.begin(),
                                 stack.layers.begin() + static_cast<ptrdiff_t>(cut_index));
    s.server_stack.layers.assign(stack.layers.begin() + static_cast<ptrdiff_t>(cut_index),
                                 stack.layers.end());
    s.server_stack.validate();
    return s;
}

ClientForward client_forward(const SplitSpec& split, const ParamVector& client_params,
                             const Tensor2D& batch, const std::vector<int>& labels) {
    if (labels.size() != batch.rows) {
        throw InputError("client_forward: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch.rows) + " rows");
    }
    ClientForward cf;
    cf.fwd = forward(split.client_stack, client_params, batch);
    cf.smashed.activations = cf.fwd.output();
    cf.smashed.labels = labels;
    return cf;
}

ServerStepResult server_forward_backward(const SplitSpec& split, const ParamVector& server_params,
                                         const SmashedData& smashed) {
    ServerStepResult r;
    ForwardResult fwd = forward(split.server_stack, server_params, smashed.activations);
    r.loss = loss_cross_entropy(fwd.output(), smashed.labels);
    r.gradient = backward_with_input_grad(split.server_stack, server_params, fwd, smashed.labels,
                                          r.cut_gradient.grad);
    r.predictions = fwd.output();
    return r;
}

ParamVector client_backward(const SplitSpec& split, const ParamVector& client_params,
                            const ClientForward& cached, const CutGradient& cut_gradient) {
    return backward_from_cut(split.client_stack, client_params, cached.fwd, cut_gradient.grad);
}

std::pair<ParamVector, ParamVector> split_params(const SplitSpec& split, const ParamVector& full) {
    std::vector<LayerShape> full_shapes = split.client_stack.layers;
    full_shapes.insert(full_shapes.end(), split.server_stack.layers.begin(),
                       split.server_stack.layers.end());
    if (full.shapes != full_shapes) {
        throw ContractViolation("split_params: params shaped for a different stack");
    }
    size_t client_n = total_param_count(split.client_stack.layers);
    ParamVector client(
        std::vector<double>(full.values.begin(),
                            full.values.begin() + static_cast<ptrdiff_t>(client_n)),
        split.client_stack.layers);
    ParamVector server(
        std::vector<double>(full.values.begin() + static_cast<ptrdiff_t>(client_n),
                            full.values.end()),
        split.server_stack.layers);
    return {std::move(client), std::move(server)};
}

ParamVector join_params(const SplitSpec& split, const ParamVector& client,
                        const ParamVector& server) {
    if (client.shapes != split.client_stack.layers) {
        throw ContractViolation("join_params: client half shaped for a different stack");
    }
    if (server.shapes != split.server_stack.layers) {
        throw ContractViolation("join_params: server half shaped for a different stack");
    }
    std::vector<double> values = client.values;
    values.insert(values.end(), server.values.begin(), server.values.end());
    std::vector<LayerShape> shapes = client.shapes;
    shapes.insert(shapes.end(), server.shapes.begin(), server.shapes.end());
    return ParamVector(std::move(values), std::move(shapes));
}

}  // namespace hiersfl
