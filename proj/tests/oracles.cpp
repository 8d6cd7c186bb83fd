#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include "hiersfl/errors.hpp"

namespace oracle {

using hiersfl::Activation;
using hiersfl::LayerShape;
using hiersfl::LayerStack;
using hiersfl::ParamVector;
using hiersfl::Tensor2D;

std::vector<std::vector<double>> to_rows(const Tensor2D& t) {
    std::vector<std::vector<double>> rows(t.rows, std::vector<double>(t.cols));
    for (size_t r = 0; r < t.rows; ++r) {
        for (size_t c = 0; c < t.cols; ++c) rows[r][c] = t.at(r, c);
    }
    return rows;
}

std::vector<std::vector<double>> reference_forward(const LayerStack& stack,
                                                   const ParamVector& params,
                                                   const std::vector<std::vector<double>>& x) {
    std::vector<std::vector<double>> a = x;
    for (size_t l = 0; l < stack.layers.size(); ++l) {
        const LayerShape& shape = stack.layers[l];
        const double* w = params.layer_data(l);
        const double* b = w + shape.in_dim * shape.out_dim;
        std::vector<std::vector<double>> z(a.size(), std::vector<double>(shape.out_dim));
        for (size_t r = 0; r < a.size(); ++r) {
            for (size_t j = 0; j < shape.out_dim; ++j) {
                double acc = b[j];
                for (size_t i = 0; i < shape.in_dim; ++i) {
                    acc += a[r][i] * w[i * shape.out_dim + j];
                }
                z[r][j] = acc;
            }
            if (shape.activation == Activation::Relu) {
                for (double& v : z[r]) v = v > 0.0 ? v : 0.0;
            } else {
                double hi = z[r][0];
                for (double v : z[r]) hi = std::max(hi, v);
                double total = 0.0;
                for (double& v : z[r]) {
                    v = std::exp(v - hi);
                    total += v;
                }
                for (double& v : z[r]) v /= total;
            }
        }
        a = std::move(z);
    }
    return a;
}

double reference_loss(const LayerStack& stack, const ParamVector& params,
                      const std::vector<std::vector<double>>& x, const std::vector<int>& labels) {
    std::vector<std::vector<double>> probs = reference_forward(stack, params, x);
    double total = 0.0;
    for (size_t r = 0; r < probs.size(); ++r) {
        double p = std::max(probs[r][static_cast<size_t>(labels[r])], 1e-12);
        total -= std::log(p);
    }
    return total / static_cast<double>(probs.size());
}

std::vector<double> fd_gradient(const LayerStack& stack, const ParamVector& params,
                                const std::vector<std::vector<double>>& x,
                                const std::vector<int>& labels, double delta) {
    std::vector<double> grad(params.size());
    ParamVector probe = params;
    for (size_t i = 0; i < params.size(); ++i) {
        probe.values[i] = params.values[i] + delta;
        double up = reference_loss(stack, probe, x, labels);
        probe.values[i] = params.values[i] - delta;
        double down = reference_loss(stack, probe, x, labels);
        probe.values[i] = params.values[i];
        grad[i] = (up - down) / (2.0 * delta);
    }
    return grad;
}

std::vector<double> scalar_fedavg(const std::vector<std::vector<double>>& models,
                                  const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<double> out(models[0].size(), 0.0);
    for (size_t i = 0; i < out.size(); ++i) {
        for (size_t k = 0; k < models.size(); ++k) {
            out[i] += weights[k] / total * models[k][i];
        }
    }
    return out;
}

std::pair<std::vector<size_t>, std::vector<size_t>> schedule_trace(size_t total_rounds, size_t p1,
                                                                   size_t p2) {
    std::vector<size_t> edge;
    for (size_t p = p1; p <= total_rounds; p += p1) edge.push_back(p);
    std::vector<size_t> cloud;
    for (size_t p = p1 * p2; p <= total_rounds; p += p1 * p2) cloud.push_back(p);
    return {edge, cloud};
}

std::pair<std::vector<ReferenceRound>, ParamVector> centralized_train(
    const hiersfl::ProtocolConfig& cfg, const hiersfl::Dataset& ds,
    const hiersfl::PartitionPlan& plan, const hiersfl::EvalSet& eval) {
    ParamVector w = hiersfl::init_params(cfg.stack,
                                         hiersfl::mix_seed(cfg.seed, hiersfl::seed_tags::kInit));
    hiersfl::OptimizerState opt = hiersfl::OptimizerState::make(
        w.size(), cfg.learning_rate, cfg.lr_decay, cfg.momentum);
    std::vector<ReferenceRound> rounds;
    for (size_t p = 1; p <= cfg.schedule.total_rounds; ++p) {
        double loss_weighted = 0.0;
        double loss_rows = 0.0;
        for (size_t e = 0; e < cfg.schedule.epochs_per_round; ++e) {
            size_t cum_epoch = (p - 1) * cfg.schedule.epochs_per_round + e;
            std::vector<size_t> order = hiersfl::epoch_order(plan, 0, cfg.seed, cum_epoch);
            for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
                size_t rows = std::min(cfg.batch_size, order.size() - start);
                hiersfl::Batch batch = hiersfl::extract_batch(ds, order, start, rows);
                hiersfl::ForwardResult fwd = hiersfl::forward(cfg.stack, w, batch.features);
                loss_weighted += hiersfl::loss_cross_entropy(fwd.output(), batch.labels) *
                                 static_cast<double>(rows);
                loss_rows += static_cast<double>(rows);
                ParamVector grad = hiersfl::backward(cfg.stack, w, fwd, batch.labels);
                hiersfl::sgd_step(w, grad, opt);
            }
            opt.advance_epoch();
        }
        opt.reset_velocity();
        auto [eval_loss, accuracy] = hiersfl::evaluate(cfg.stack, w, eval);
        (void)eval_loss;
        rounds.push_back(ReferenceRound{loss_weighted / loss_rows, accuracy});
    }
    return {rounds, w};
}

}  // namespace oracle
