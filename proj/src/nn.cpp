#include "hiersfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hiersfl/errors.hpp"
#include "hiersfl/rng.hpp"

namespace hiersfl {

namespace {

constexpr double kProbFloor = 1e-12;

std::string dim_str(size_t r, size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

ParamVector::ParamVector(std::vector<double> v, std::vector<LayerShape> s)
    : values(std::move(v)), shapes(std::move(s)) {
    if (values.size() != total_param_count(shapes)) {
        throw ContractViolation("ParamVector: " + std::to_string(values.size()) +
                                " values for shapes holding " +
                                std::to_string(total_param_count(shapes)));
    }
}

ParamVector ParamVector::zeros(const std::vector<LayerShape>& shapes) {
    ParamVector p;
    p.shapes = shapes;
    p.values.assign(total_param_count(shapes), 0.0);
    return p;
}

bool ParamVector::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

size_t ParamVector::layer_offset(size_t i) const {
    if (i >= shapes.size()) {
        throw ContractViolation("ParamVector::layer_offset: layer " + std::to_string(i) +
                                " of " + std::to_string(shapes.size()));
    }
    size_t off = 0;
    for (size_t k = 0; k < i; ++k) off += shapes[k].param_count();
    return off;
}

size_t total_param_count(const std::vector<LayerShape>& shapes) {
    size_t n = 0;
    for (const auto& s : shapes) n += s.param_count();
    return n;
}

std::string shape_to_string(const LayerShape& s) {
    return dim_str(s.in_dim, s.out_dim) +
           (s.activation == Activation::Relu ? " relu" : " softmax");
}

LayerStack LayerStack::dense(const std::vector<size_t>& dims) {
    if (dims.size() < 2) {
        throw InputError("LayerStack::dense: need at least input and output dims, got " +
                         std::to_string(dims.size()));
    }
    LayerStack stack;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        bool last = (i + 2 == dims.size());
        stack.layers.push_back(
            {last ? Activation::SoftmaxOutput : Activation::Relu, dims[i], dims[i + 1]});
    }
    stack.validate();
    return stack;
}

size_t LayerStack::input_dim() const {
    if (layers.empty()) throw ContractViolation("LayerStack::input_dim on empty stack");
    return layers.front().in_dim;
}

size_t LayerStack::output_dim() const {
    if (layers.empty()) throw ContractViolation("LayerStack::output_dim on empty stack");
    return layers.back().out_dim;
}

LayerStack LayerStack::prefix(size_t cut) const {
    if (cut == 0 || cut >= layers.size()) {
        throw InputError("LayerStack::prefix: cut " + std::to_string(cut) +
                         " outside [1, " + std::to_string(layers.size() - 1) + "]");
    }
    LayerStack s;
    s.layers.assign(layers.begin(), layers.begin() + static_cast<ptrdiff_t>(cut));
    return s;
}

LayerStack LayerStack::suffix(size_t cut) const {
    if (cut == 0 || cut >= layers.size()) {
        throw InputError("LayerStack::suffix: cut " + std::to_string(cut) +
                         " outside [1, " + std::to_string(layers.size() - 1) + "]");
    }
    LayerStack s;
    s.layers.assign(layers.begin() + static_cast<ptrdiff_t>(cut), layers.end());
    return s;
}

void LayerStack::validate() const {
    if (layers.empty()) throw InputError("LayerStack: no layers");
    for (size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].out_dim != layers[i + 1].in_dim) {
            throw InputError("LayerStack: layer " + std::to_string(i) + " emits " +
                             std::to_string(layers[i].out_dim) + " but layer " +
                             std::to_string(i + 1) + " expects " +
                             std::to_string(layers[i + 1].in_dim));
        }
        if (layers[i].activation != Activation::Relu) {
            throw InputError("LayerStack: hidden layer " + std::to_string(i) + " must be relu");
        }
    }
    // The last layer may be relu (a client half) or the softmax output (a
    // full or server stack); softmax anywhere else is rejected above.
    for (const auto& l : layers) {
        if (l.in_dim == 0 || l.out_dim == 0) {
            throw InputError("LayerStack: zero-width layer " + shape_to_string(l));
        }
    }
}

OptimizerState OptimizerState::make(size_t param_count, double learning_rate, double decay,
                                    double momentum) {
    if (!(learning_rate > 0.0)) {
        throw InputError("OptimizerState: learning rate must be positive, got " +
                         std::to_string(learning_rate));
    }
    if (!(decay > 0.0 && decay <= 1.0)) {
        throw InputError("OptimizerState: decay must lie in (0, 1], got " +
                         std::to_string(decay));
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw InputError("OptimizerState: momentum must lie in [0, 1), got " +
                         std::to_string(momentum));
    }
    OptimizerState s;
    s.learning_rate = learning_rate;
    s.decay = decay;
    s.momentum = momentum;
    s.velocity.assign(param_count, 0.0);
    return s;
}

double OptimizerState::effective_rate() const {
    return learning_rate * std::pow(decay, static_cast<double>(epoch));
}

void OptimizerState::reset_velocity() {
    std::fill(velocity.begin(), velocity.end(), 0.0);
}

ParamVector init_params(const LayerStack& stack, uint64_t seed) {
    stack.validate();
    ParamVector p = ParamVector::zeros(stack.layers);
    Rng rng(seed);
    for (size_t i = 0; i < stack.layers.size(); ++i) {
        const LayerShape& l = stack.layers[i];
        double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
        double* w = p.layer_data(i);
        for (size_t k = 0; k < l.in_dim * l.out_dim; ++k) {
            w[k] = (2.0 * rng.next_double() - 1.0) * limit;
        }
        // Biases stay zero.
    }
    return p;
}

namespace {

// Z = A*W + b, with this layer's weights and bias taken from `lp`.
Tensor2D affine(const LayerShape& l, const double* lp, const Tensor2D& a) {
    Tensor2D w(l.in_dim, l.out_dim, std::vector<double>(lp, lp + l.in_dim * l.out_dim));
    Tensor2D z = matmul(a, w);
    add_row_vector(z, lp + l.in_dim * l.out_dim, l.out_dim);
    return z;
}

void apply_relu(Tensor2D& z) {
    for (double& v : z.data) v = v > 0.0 ? v : 0.0;
}

// Row-wise stable softmax in place.
void apply_softmax(Tensor2D& z) {
    for (size_t r = 0; r < z.rows; ++r) {
        double* row = z.data.data() + r * z.cols;
        double m = row[0];
        for (size_t c = 1; c < z.cols; ++c) m = std::max(m, row[c]);
        double sum = 0.0;
        for (size_t c = 0; c < z.cols; ++c) {
            row[c] = std::exp(row[c] - m);
            sum += row[c];
        }
        for (size_t c = 0; c < z.cols; ++c) row[c] /= sum;
    }
}

// dL/dZ of mean cross-entropy at the softmax output: (P - onehot) / n.
Tensor2D loss_grad_logits(const Tensor2D& predictions, const std::vector<int>& labels) {
    Tensor2D g = predictions;
    double inv_n = 1.0 / static_cast<double>(g.rows);
    for (size_t r = 0; r < g.rows; ++r) {
        g.at(r, static_cast<size_t>(labels[r])) -= 1.0;
        for (size_t c = 0; c < g.cols; ++c) g.at(r, c) *= inv_n;
    }
    return g;
}

// Backpropagates dZ (the loss gradient w.r.t. the top layer's pre-activation)
// down through every layer of `stack`, writing per-layer gradients into
// `grad`. The identical instruction sequence serves the monolithic model and
// both halves of a split one, which keeps split execution bit-exact.
//
// fwd.activations[i] must be the input to layer i. If `input_grad` is
// non-null it receives dL/dA_0 before any ReLU mask.
void backward_core(const LayerStack& stack, const ParamVector& params, const ForwardResult& fwd,
                   Tensor2D dz, ParamVector& grad, Tensor2D* input_grad) {
    for (size_t i = stack.layers.size(); i-- > 0;) {
        const LayerShape& l = stack.layers[i];
        const Tensor2D& input = fwd.activations[i];
        Tensor2D dw = matmul_at_b(input, dz);
        double* g = grad.layer_data(i);
        std::copy(dw.data.begin(), dw.data.end(), g);
        column_sums(dz, g + l.in_dim * l.out_dim);
        if (i == 0 && input_grad == nullptr) break;
        const double* lp = params.layer_data(i);
        Tensor2D w(l.in_dim, l.out_dim, std::vector<double>(lp, lp + l.in_dim * l.out_dim));
        Tensor2D da = matmul_a_bt(dz, w);
        if (i == 0) {
            *input_grad = std::move(da);
            break;
        }
        // The input to layer i is the ReLU output of layer i-1; mask by it.
        for (size_t k = 0; k < da.data.size(); ++k) {
            da.data[k] = input.data[k] > 0.0 ? da.data[k] : 0.0;
        }
        dz = std::move(da);
    }
}

void check_forward_args(const LayerStack& stack, const ParamVector& params,
                        const Tensor2D& batch) {
    stack.validate();
    if (params.shapes != stack.layers) {
        throw ContractViolation("forward: params shaped for a different stack");
    }
    if (batch.rows == 0) throw InputError("forward: empty batch");
    if (batch.cols != stack.input_dim()) {
        throw InputError("forward: batch has " + std::to_string(batch.cols) +
                         " features but layer 0 expects " + std::to_string(stack.input_dim()));
    }
}

void check_labels(const Tensor2D& predictions, const std::vector<int>& labels) {
    if (labels.size() != predictions.rows) {
        throw InputError("labels: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(predictions.rows) + " rows");
    }
    for (size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || static_cast<size_t>(labels[r]) >= predictions.cols) {
            throw InputError("labels: row " + std::to_string(r) + " has class " +
                             std::to_string(labels[r]) + ", valid range [0, " +
                             std::to_string(predictions.cols) + ")");
        }
    }
}

}  // namespace

ForwardResult forward(const LayerStack& stack, const ParamVector& params, const Tensor2D& batch) {
    check_forward_args(stack, params, batch);
    ForwardResult fwd;
    fwd.activations.reserve(stack.layers.size() + 1);
    fwd.activations.push_back(batch);
    for (size_t i = 0; i < stack.layers.size(); ++i) {
        Tensor2D z = affine(stack.layers[i], params.layer_data(i), fwd.activations.back());
        // Checked before the activation: relu would mask a NaN to zero, and
        // relu/softmax of finite inputs are always finite.
        if (!z.all_finite()) {
            throw NumericError("forward: non-finite activation at layer " + std::to_string(i));
        }
        if (stack.layers[i].activation == Activation::Relu) {
            apply_relu(z);
        } else {
            apply_softmax(z);
        }
        fwd.activations.push_back(std::move(z));
    }
    return fwd;
}

double loss_cross_entropy(const Tensor2D& predictions, const std::vector<int>& labels) {
    check_labels(predictions, labels);
    double total = 0.0;
    for (size_t r = 0; r < predictions.rows; ++r) {
        double p = predictions.at(r, static_cast<size_t>(labels[r]));
        total += -std::log(std::max(p, kProbFloor));
    }
    return total / static_cast<double>(predictions.rows);
}

ParamVector backward(const LayerStack& stack, const ParamVector& params, const ForwardResult& fwd,
                     const std::vector<int>& labels) {
    if (fwd.activations.size() != stack.layers.size() + 1) {
        throw ContractViolation("backward: activations do not match the stack");
    }
    if (stack.layers.back().activation != Activation::SoftmaxOutput) {
        throw ContractViolation("backward: stack must end in the softmax output");
    }
    check_labels(fwd.output(), labels);
    ParamVector grad = ParamVector::zeros(stack.layers);
    backward_core(stack, params, fwd, loss_grad_logits(fwd.output(), labels), grad, nullptr);
    return grad;
}

ParamVector backward_with_input_grad(const LayerStack& stack, const ParamVector& params,
                                     const ForwardResult& fwd, const std::vector<int>& labels,
                                     Tensor2D& input_grad) {
    if (fwd.activations.size() != stack.layers.size() + 1) {
        throw ContractViolation("backward: activations do not match the stack");
    }
    if (stack.layers.back().activation != Activation::SoftmaxOutput) {
        throw ContractViolation("backward: stack must end in the softmax output");
    }
    check_labels(fwd.output(), labels);
    ParamVector grad = ParamVector::zeros(stack.layers);
    backward_core(stack, params, fwd, loss_grad_logits(fwd.output(), labels), grad, &input_grad);
    return grad;
}

ParamVector backward_from_cut(const LayerStack& stack, const ParamVector& params,
                              const ForwardResult& fwd, const Tensor2D& cut_gradient) {
    if (fwd.activations.size() != stack.layers.size() + 1) {
        throw ContractViolation("backward_from_cut: activations do not match the stack");
    }
    if (stack.layers.back().activation != Activation::Relu) {
        throw ContractViolation("backward_from_cut: partial stack must end in relu");
    }
    const Tensor2D& out = fwd.output();
    if (!cut_gradient.same_shape(out)) {
        throw ContractViolation("backward_from_cut: cut gradient is " +
                                dim_str(cut_gradient.rows, cut_gradient.cols) +
                                " but the cut emits " + dim_str(out.rows, out.cols));
    }
    // The seed arrives unmasked; apply the cut activation's ReLU mask here so
    // the masking happens exactly once, on the client side.
    Tensor2D dz = cut_gradient;
    for (size_t k = 0; k < dz.data.size(); ++k) {
        dz.data[k] = out.data[k] > 0.0 ? dz.data[k] : 0.0;
    }
    ParamVector grad = ParamVector::zeros(stack.layers);
    backward_core(stack, params, fwd, std::move(dz), grad, nullptr);
    return grad;
}

void sgd_step(ParamVector& params, const ParamVector& gradient, OptimizerState& opt) {
    if (!params.same_shapes(gradient)) {
        throw ContractViolation("sgd_step: gradient shaped for a different model");
    }
    if (opt.velocity.size() != params.size()) {
        throw ContractViolation("sgd_step: optimizer sized for " +
                                std::to_string(opt.velocity.size()) + " params, model has " +
                                std::to_string(params.size()));
    }
    if (!gradient.all_finite()) {
        throw NumericError("sgd_step: non-finite gradient");
    }
    double rate = opt.effective_rate();
    for (size_t k = 0; k < params.size(); ++k) {
        opt.velocity[k] = opt.momentum * opt.velocity[k] + gradient.values[k];
        params.values[k] -= rate * opt.velocity[k];
    }
}

}  // namespace hiersfl
