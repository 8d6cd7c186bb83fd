#include "hiersfl/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hiersfl/errors.hpp"
#include "hiersfl/rng.hpp"

namespace hiersfl {

Topology Topology::balanced(size_t num_clients, size_t num_mes) {
    if (num_mes == 0 || num_clients < num_mes) {
        throw InputError("topology: need num_clients >= num_mes >= 1, got " +
                         std::to_string(num_clients) + " clients, " + std::to_string(num_mes) +
                         " MESs");
    }
    Topology t;
    t.num_clients = num_clients;
    t.num_mes = num_mes;
    t.assignment.resize(num_clients);
    // First (num_clients mod num_mes) MESs take the extra client.
    size_t base = num_clients / num_mes;
    size_t extra = num_clients % num_mes;
    size_t client = 0;
    for (size_t m = 0; m < num_mes; ++m) {
        size_t take = base + (m < extra ? 1 : 0);
        for (size_t i = 0; i < take; ++i) t.assignment[client++] = m;
    }
    return t;
}

std::vector<std::vector<size_t>> Topology::clients_of_mes() const {
    std::vector<std::vector<size_t>> groups(num_mes);
    for (size_t k = 0; k < assignment.size(); ++k) groups[assignment[k]].push_back(k);
    return groups;
}

void Topology::validate() const {
    if (num_mes == 0 || num_clients == 0 || num_clients < num_mes) {
        throw InputError("topology: need num_clients >= num_mes >= 1");
    }
    if (assignment.size() != num_clients) {
        throw InputError("topology: assignment covers " + std::to_string(assignment.size()) +
                         " of " + std::to_string(num_clients) + " clients");
    }
    std::vector<size_t> load(num_mes, 0);
    for (size_t k = 0; k < assignment.size(); ++k) {
        if (assignment[k] >= num_mes) {
            throw InputError("topology: client " + std::to_string(k) + " mapped to MES " +
                             std::to_string(assignment[k]) + " of " + std::to_string(num_mes));
        }
        ++load[assignment[k]];
    }
    for (size_t m = 0; m < num_mes; ++m) {
        if (load[m] == 0) throw InputError("topology: MES " + std::to_string(m) + " serves no clients");
    }
}

void Schedule::validate() const {
    if (total_rounds == 0 || p1 == 0 || p2 == 0 || epochs_per_round == 0) {
        throw InputError("schedule: total_rounds, p1, p2 and epochs_per_round must be >= 1");
    }
}

bool edge_agg_due(size_t round, const Schedule& sched) {
    if (round == 0) throw InputError("edge_agg_due: rounds are 1-based");
    return round % sched.p1 == 0;
}

bool cloud_agg_due(size_t round, const Schedule& sched) {
    if (round == 0) throw InputError("cloud_agg_due: rounds are 1-based");
    return round % (sched.p1 * sched.p2) == 0;
}

ParamVector fedavg(const std::vector<ParamVector>& models, const std::vector<double>& weights) {
    if (models.empty()) throw InputError("fedavg: no models");
    if (weights.size() != models.size()) {
        throw InputError("fedavg: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(models.size()) + " models");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw InputError("fedavg: weights must be positive");
        total += w;
    }
    for (size_t k = 1; k < models.size(); ++k) {
        if (!models[k].same_shapes(models[0])) {
            throw InputError("fedavg: model " + std::to_string(k) + " shaped differently");
        }
    }
    ParamVector out = ParamVector::zeros(models[0].shapes);
    for (size_t k = 0; k < models.size(); ++k) {
        double c = weights[k] / total;
        const std::vector<double>& v = models[k].values;
        for (size_t i = 0; i < v.size(); ++i) out.values[i] += c * v[i];
    }
    return out;
}

EvalSet build_eval_set(const Dataset& ds, const PartitionPlan& plan) {
    size_t n = 0;
    for (const auto& s : plan.client_samples) n += s.size();
    if (n == 0) throw InputError("build_eval_set: empty plan");
    EvalSet eval;
    size_t d = ds.feature_dim();
    eval.features = Tensor2D(n, d);
    eval.labels.resize(n);
    size_t r = 0;
    for (const auto& samples : plan.client_samples) {
        for (size_t src : samples) {
            std::copy(ds.features.data.begin() + static_cast<ptrdiff_t>(src * d),
                      ds.features.data.begin() + static_cast<ptrdiff_t>((src + 1) * d),
                      eval.features.data.begin() + static_cast<ptrdiff_t>(r * d));
            eval.labels[r] = ds.labels[src];
            ++r;
        }
    }
    return eval;
}

namespace {

constexpr size_t kEvalChunk = 512;

}  // namespace

std::pair<double, double> evaluate(const LayerStack& stack, const ParamVector& params,
                                   const EvalSet& eval) {
    size_t n = eval.features.rows;
    if (n == 0 || eval.labels.size() != n) {
        throw InputError("evaluate: evaluation pool empty or mislabeled");
    }
    size_t d = eval.features.cols;
    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t start = 0; start < n; start += kEvalChunk) {
        size_t rows = std::min(kEvalChunk, n - start);
        Tensor2D chunk(rows, d,
                       std::vector<double>(
                           eval.features.data.begin() + static_cast<ptrdiff_t>(start * d),
                           eval.features.data.begin() + static_cast<ptrdiff_t>((start + rows) * d)));
        std::vector<int> labels(eval.labels.begin() + static_cast<ptrdiff_t>(start),
                                eval.labels.begin() + static_cast<ptrdiff_t>(start + rows));
        ForwardResult fwd = forward(stack, params, chunk);
        const Tensor2D& preds = fwd.output();
        loss_sum += loss_cross_entropy(preds, labels) * static_cast<double>(rows);
        for (size_t r = 0; r < rows; ++r) {
            size_t best = 0;
            for (size_t c = 1; c < preds.cols; ++c) {
                if (preds.at(r, c) > preds.at(r, best)) best = c;
            }
            if (static_cast<int>(best) == labels[r]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(n),
            static_cast<double>(correct) / static_cast<double>(n)};
}

namespace {

// Location of the currently executing step, for error context.
struct PhaseTracker {
    size_t round = 0;
    ptrdiff_t client = -1;  // -1 when no single client is in scope
    const char* phase = "setup";
};

[[noreturn]] void rethrow_with_context(const PhaseTracker& at, const Error& e) {
    std::string where = "round " + std::to_string(at.round);
    if (at.client >= 0) where += ", client " + std::to_string(at.client);
    where += ", phase " + std::string(at.phase);
    throw ProtocolError("(" + where + ") " + e.what());
}

struct LossAccumulator {
    double weighted = 0.0;
    double rows = 0.0;

    void add(double loss, size_t batch_rows) {
        weighted += loss * static_cast<double>(batch_rows);
        rows += static_cast<double>(batch_rows);
    }
    double mean() const { return rows > 0.0 ? weighted / rows : 0.0; }
};

struct ClientNode {
    ParamVector params;
    OptimizerState opt;
    Rng noise;
    double n_samples = 0.0;
};

double param_bytes(size_t param_count) { return static_cast<double>(param_count) * 8.0; }

void validate_run_inputs(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                         bool split_protocol) {
    cfg.stack.validate();
    cfg.topology.validate();
    cfg.schedule.validate();
    cfg.ldp.validate();
    cfg.edge_link.validate();
    cfg.cloud_link.validate();
    cfg.compute.validate();
    if (cfg.batch_size == 0) throw InputError("protocol: batch_size must be >= 1");
    if (split_protocol && (cfg.cut_index == 0 || cfg.cut_index >= cfg.stack.depth())) {
        throw InputError("protocol: cut_index " + std::to_string(cfg.cut_index) +
                         " outside [1, " + std::to_string(cfg.stack.depth() - 1) + "]");
    }
    if (plan.num_clients() != cfg.topology.num_clients) {
        throw ContractViolation("protocol: plan covers " + std::to_string(plan.num_clients()) +
                                " clients, topology expects " +
                                std::to_string(cfg.topology.num_clients));
    }
    if (ds.feature_dim() != cfg.stack.input_dim()) {
        throw ContractViolation("protocol: dataset features " + std::to_string(ds.feature_dim()) +
                                " wide, stack expects " + std::to_string(cfg.stack.input_dim()));
    }
}

std::vector<ClientNode> make_clients(const ProtocolConfig& cfg, const PartitionPlan& plan,
                                     const ParamVector& start) {
    std::vector<ClientNode> clients;
    clients.reserve(cfg.topology.num_clients);
    for (size_t k = 0; k < cfg.topology.num_clients; ++k) {
        clients.push_back(ClientNode{
            start,
            OptimizerState::make(start.size(), cfg.learning_rate, cfg.lr_decay, cfg.momentum),
            Rng(mix_seed(cfg.seed, seed_tags::kNoise, k)),
            static_cast<double>(plan.client_samples[k].size())});
    }
    return clients;
}

void overwrite_params(ClientNode& client, const ParamVector& params) {
    client.params = params;
    client.opt.reset_velocity();
}

ParamVector snapshot_clients(const std::vector<ClientNode>& clients) {
    std::vector<ParamVector> models;
    std::vector<double> weights;
    models.reserve(clients.size());
    weights.reserve(clients.size());
    for (const ClientNode& c : clients) {
        models.push_back(c.params);
        weights.push_back(c.n_samples);
    }
    return fedavg(models, weights);
}

// Batch row counts per step; equal client data sizes keep lockstep protocols
// aligned, which the callers assert.
size_t steps_per_epoch(size_t n_samples, size_t batch_size) {
    return (n_samples + batch_size - 1) / batch_size;
}

void push_record(RunResult& rr, const ProtocolConfig& cfg, size_t round, double train_loss,
                 double accuracy, double elapsed_s, unsigned long long bytes_edge,
                 unsigned long long bytes_cloud) {
    RoundRecord rec;
    rec.round = round;
    rec.protocol = cfg.protocol;
    rec.train_loss = train_loss;
    rec.accuracy = accuracy;
    rec.sim_time_s = elapsed_s;
    rec.bytes_client_mes = bytes_edge;
    rec.bytes_mes_cloud = bytes_cloud;
    rr.rounds.push_back(std::move(rec));
}

}  // namespace

RunResult run_fl(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                 const EvalSet& eval) {
    validate_run_inputs(cfg, ds, plan, false);
    const size_t num_clients = cfg.topology.num_clients;
    const size_t epochs = cfg.schedule.epochs_per_round;
    const size_t full_count = cfg.stack.param_count();
    const double full_bytes = param_bytes(full_count);

    ParamVector start = init_params(cfg.stack, mix_seed(cfg.seed, seed_tags::kInit));
    std::vector<ClientNode> clients = make_clients(cfg, plan, start);

    RunResult rr;
    SimClock clock;
    PhaseTracker at;
    try {
        for (size_t p = 1; p <= cfg.schedule.total_rounds; ++p) {
            at.round = p;
            LossAccumulator loss_acc;
            std::vector<PhaseBreakdown> branches(num_clients);
            unsigned long long bytes_cloud = 0;

            for (size_t k = 0; k < num_clients; ++k) {
                at.client = static_cast<ptrdiff_t>(k);
                for (size_t e = 0; e < epochs; ++e) {
                    size_t cum_epoch = (p - 1) * epochs + e;
                    at.phase = "train";
                    std::vector<size_t> order = epoch_order(plan, k, cfg.seed, cum_epoch);
                    for (size_t startr = 0; startr < order.size(); startr += cfg.batch_size) {
                        size_t rows = std::min(cfg.batch_size, order.size() - startr);
                        Batch batch = extract_batch(ds, order, startr, rows);
                        ForwardResult fwd = forward(cfg.stack, clients[k].params, batch.features);
                        double loss = loss_cross_entropy(fwd.output(), batch.labels);
                        ParamVector grad = backward(cfg.stack, clients[k].params, fwd, batch.labels);
                        sgd_step(clients[k].params, grad, clients[k].opt);
                        loss_acc.add(loss, rows);
                        branches[k].client_compute += compute_time(
                            cfg.compute.client, static_cast<double>(rows),
                            static_cast<double>(full_count));
                    }
                    at.phase = "perturb";
                    perturb_params(clients[k].params, cfg.ldp, clients[k].noise);
                    clients[k].opt.advance_epoch();
                }
            }

            at.client = -1;
            at.phase = "aggregate";
            ParamVector global = snapshot_clients(clients);
            for (ClientNode& c : clients) overwrite_params(c, global);
            rr.cloud_agg_rounds.push_back(p);

            PhaseBreakdown tail;
            tail.comm_mes_cloud += transfer_time(full_bytes, cfg.cloud_link);  // models up
            tail.cloud_compute += compute_time(cfg.compute.cloud,
                                               static_cast<double>(num_clients),
                                               static_cast<double>(full_count));
            tail.comm_mes_cloud += transfer_time(full_bytes, cfg.cloud_link);  // global down
            bytes_cloud += 2ULL * num_clients * static_cast<unsigned long long>(full_bytes);

            PhaseBreakdown combined = parallel_max(branches);
            combined += tail;
            clock.advance(combined);

            at.phase = "evaluate";
            ParamVector snap = snapshot_clients(clients);
            auto [eval_loss, accuracy] = evaluate(cfg.stack, snap, eval);
            (void)eval_loss;
            push_record(rr, cfg, p, loss_acc.mean(), accuracy, clock.elapsed_s, 0, bytes_cloud);
            if (p == cfg.schedule.total_rounds) rr.final_params = std::move(snap);
        }
    } catch (const ProtocolError&) {
        throw;
    } catch (const Error& e) {
        rethrow_with_context(at, e);
    }
    rr.phases = clock.phases;
    rr.elapsed_s = clock.elapsed_s;
    return rr;
}

RunResult run_hfl(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                  const EvalSet& eval) {
    validate_run_inputs(cfg, ds, plan, false);
    const size_t epochs = cfg.schedule.epochs_per_round;
    const size_t full_count = cfg.stack.param_count();
    const double full_bytes = param_bytes(full_count);
    const std::vector<std::vector<size_t>> groups = cfg.topology.clients_of_mes();

    ParamVector start = init_params(cfg.stack, mix_seed(cfg.seed, seed_tags::kInit));
    std::vector<ClientNode> clients = make_clients(cfg, plan, start);

    RunResult rr;
    SimClock clock;
    PhaseTracker at;
    try {
        for (size_t p = 1; p <= cfg.schedule.total_rounds; ++p) {
            at.round = p;
            LossAccumulator loss_acc;
            std::vector<PhaseBreakdown> branches(cfg.topology.num_mes);
            unsigned long long bytes_edge = 0;
            unsigned long long bytes_cloud = 0;

            for (size_t m = 0; m < cfg.topology.num_mes; ++m) {
                double slowest_client_s = 0.0;
                for (size_t k : groups[m]) {
                    at.client = static_cast<ptrdiff_t>(k);
                    double client_s = 0.0;
                    for (size_t e = 0; e < epochs; ++e) {
                        size_t cum_epoch = (p - 1) * epochs + e;
                        at.phase = "train";
                        std::vector<size_t> order = epoch_order(plan, k, cfg.seed, cum_epoch);
                        for (size_t startr = 0; startr < order.size(); startr += cfg.batch_size) {
                            size_t rows = std::min(cfg.batch_size, order.size() - startr);
                            Batch batch = extract_batch(ds, order, startr, rows);
                            ForwardResult fwd =
                                forward(cfg.stack, clients[k].params, batch.features);
                            double loss = loss_cross_entropy(fwd.output(), batch.labels);
                            ParamVector grad =
                                backward(cfg.stack, clients[k].params, fwd, batch.labels);
                            sgd_step(clients[k].params, grad, clients[k].opt);
                            loss_acc.add(loss, rows);
                            client_s += compute_time(cfg.compute.client,
                                                     static_cast<double>(rows),
                                                     static_cast<double>(full_count));
                        }
                        at.phase = "perturb";
                        perturb_params(clients[k].params, cfg.ldp, clients[k].noise);
                        clients[k].opt.advance_epoch();
                    }
                    slowest_client_s = std::max(slowest_client_s, client_s);
                }
                branches[m].client_compute += slowest_client_s;
            }

            at.client = -1;
            const bool edge_due = edge_agg_due(p, cfg.schedule);
            const bool cloud_due = cloud_agg_due(p, cfg.schedule);
            std::vector<ParamVector> mes_models;
            std::vector<double> mes_weights;
            if (edge_due) {
                at.phase = "edge-aggregate";
                rr.edge_agg_rounds.push_back(p);
                for (size_t m = 0; m < cfg.topology.num_mes; ++m) {
                    std::vector<ParamVector> models;
                    std::vector<double> weights;
                    for (size_t k : groups[m]) {
                        models.push_back(clients[k].params);
                        weights.push_back(clients[k].n_samples);
                    }
                    ParamVector agg = fedavg(models, weights);
                    branches[m].comm_client_mes += transfer_time(full_bytes, cfg.edge_link);
                    branches[m].mes_compute +=
                        compute_time(cfg.compute.mes, static_cast<double>(groups[m].size()),
                                     static_cast<double>(full_count));
                    bytes_edge += 2ULL * groups[m].size() *
                                  static_cast<unsigned long long>(full_bytes);
                    if (!cloud_due) {
                        branches[m].comm_client_mes += transfer_time(full_bytes, cfg.edge_link);
                        for (size_t k : groups[m]) overwrite_params(clients[k], agg);
                    }
                    mes_models.push_back(std::move(agg));
                    mes_weights.push_back(
                        std::accumulate(groups[m].begin(), groups[m].end(), 0.0,
                                        [&](double acc, size_t k) {
                                            return acc + clients[k].n_samples;
                                        }));
                }
            }

            PhaseBreakdown tail;
            if (cloud_due) {
                at.phase = "cloud-aggregate";
                rr.cloud_agg_rounds.push_back(p);
                ParamVector global = fedavg(mes_models, mes_weights);
                for (ClientNode& c : clients) overwrite_params(c, global);
                tail.comm_mes_cloud += transfer_time(full_bytes, cfg.cloud_link);
                tail.cloud_compute +=
                    compute_time(cfg.compute.cloud, static_cast<double>(cfg.topology.num_mes),
                                 static_cast<double>(full_count));
                tail.comm_mes_cloud += transfer_time(full_bytes, cfg.cloud_link);
                tail.comm_client_mes += transfer_time(full_bytes, cfg.edge_link);
                bytes_cloud += 2ULL * cfg.topology.num_mes *
                               static_cast<unsigned long long>(full_bytes);
            }

            PhaseBreakdown combined = parallel_max(branches);
            combined += tail;
            clock.advance(combined);

            at.phase = "evaluate";
            ParamVector snap = snapshot_clients(clients);
            auto [eval_loss, accuracy] = evaluate(cfg.stack, snap, eval);
            (void)eval_loss;
            push_record(rr, cfg, p, loss_acc.mean(), accuracy, clock.elapsed_s, bytes_edge,
                        bytes_cloud);
            if (p == cfg.schedule.total_rounds) rr.final_params = std::move(snap);
        }
    } catch (const ProtocolError&) {
        throw;
    } catch (const Error& e) {
        rethrow_with_context(at, e);
    }
    rr.phases = clock.phases;
    rr.elapsed_s = clock.elapsed_s;
    return rr;
}

namespace {

// Client halves averaged over everyone, server halves over their owners.
ParamVector snapshot_split_model(const SplitSpec& split, const std::vector<ClientNode>& clients,
                                 const std::vector<ParamVector>& server_halves,
                                 const std::vector<double>& server_weights) {
    ParamVector client_avg = snapshot_clients(clients);
    ParamVector server_avg = fedavg(server_halves, server_weights);
    return join_params(split, client_avg, server_avg);
}

}  // namespace

RunResult run_sfl(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                  const EvalSet& eval) {
    validate_run_inputs(cfg, ds, plan, true);
    const size_t num_clients = cfg.topology.num_clients;
    const size_t epochs = cfg.schedule.epochs_per_round;
    const SplitSpec split = make_split(cfg.stack, cfg.cut_index);
    const size_t chalf_count = total_param_count(split.client_stack.layers);
    const size_t shalf_count = total_param_count(split.server_stack.layers);
    const double chalf_bytes = param_bytes(chalf_count);

    ParamVector start = init_params(cfg.stack, mix_seed(cfg.seed, seed_tags::kInit));
    auto [client_start, server_start] = split_params(split, start);
    std::vector<ClientNode> clients = make_clients(cfg, plan, client_start);
    ParamVector server_params = server_start;
    OptimizerState server_opt = OptimizerState::make(server_params.size(), cfg.learning_rate,
                                                     cfg.lr_decay, cfg.momentum);
    std::vector<double> client_weights;
    for (const ClientNode& c : clients) client_weights.push_back(c.n_samples);

    const size_t n_per_client = plan.client_samples[0].size();
    for (size_t k = 1; k < num_clients; ++k) {
        if (plan.client_samples[k].size() != n_per_client) {
            throw ContractViolation("run_sfl: lockstep training needs equal client data sizes");
        }
    }
    const size_t num_steps = steps_per_epoch(n_per_client, cfg.batch_size);

    RunResult rr;
    SimClock clock;
    PhaseTracker at;
    try {
        for (size_t p = 1; p <= cfg.schedule.total_rounds; ++p) {
            at.round = p;
            LossAccumulator loss_acc;
            PhaseBreakdown seq;
            unsigned long long bytes_cloud = 0;

            for (size_t e = 0; e < epochs; ++e) {
                size_t cum_epoch = (p - 1) * epochs + e;
                at.phase = "train";
                std::vector<std::vector<size_t>> orders(num_clients);
                for (size_t k = 0; k < num_clients; ++k) {
                    orders[k] = epoch_order(plan, k, cfg.seed, cum_epoch);
                }
                for (size_t t = 0; t < num_steps; ++t) {
                    size_t startr = t * cfg.batch_size;
                    size_t rows = std::min(cfg.batch_size, n_per_client - startr);

                    std::vector<ClientForward> forwards(num_clients);
                    for (size_t k = 0; k < num_clients; ++k) {
                        at.client = static_cast<ptrdiff_t>(k);
                        Batch batch = extract_batch(ds, orders[k], startr, rows);
                        forwards[k] = client_forward(split, clients[k].params, batch.features,
                                                     batch.labels);
                    }
                    at.client = -1;
                    seq.client_compute += compute_time(cfg.compute.client,
                                                       static_cast<double>(rows),
                                                       static_cast<double>(chalf_count));
                    seq.comm_mes_cloud +=
                        transfer_time(static_cast<double>(forwards[0].smashed.byte_size()),
                                      cfg.cloud_link);

                    std::vector<ParamVector> server_grads;
                    std::vector<CutGradient> cut_grads(num_clients);
                    for (size_t k = 0; k < num_clients; ++k) {
                        at.client = static_cast<ptrdiff_t>(k);
                        bytes_cloud += forwards[k].smashed.byte_size();
                        ServerStepResult res =
                            server_forward_backward(split, server_params, forwards[k].smashed);
                        loss_acc.add(res.loss, rows);
                        bytes_cloud += res.cut_gradient.byte_size();
                        server_grads.push_back(std::move(res.gradient));
                        cut_grads[k] = std::move(res.cut_gradient);
                    }
                    at.client = -1;
                    seq.cloud_compute += compute_time(cfg.compute.cloud,
                                                      static_cast<double>(rows),
                                                      static_cast<double>(shalf_count));
                    ParamVector grad_avg = fedavg(server_grads, client_weights);
                    sgd_step(server_params, grad_avg, server_opt);
                    seq.comm_mes_cloud +=
                        transfer_time(static_cast<double>(cut_grads[0].byte_size()),
                                      cfg.cloud_link);

                    for (size_t k = 0; k < num_clients; ++k) {
                        at.client = static_cast<ptrdiff_t>(k);
                        ParamVector grad =
                            client_backward(split, clients[k].params, forwards[k], cut_grads[k]);
                        sgd_step(clients[k].params, grad, clients[k].opt);
                    }
                    at.client = -1;
                }
                at.phase = "perturb";
                for (size_t k = 0; k < num_clients; ++k) {
                    at.client = static_cast<ptrdiff_t>(k);
                    perturb_params(clients[k].params, cfg.ldp, clients[k].noise);
                    clients[k].opt.advance_epoch();
                }
                at.client = -1;
                server_opt.advance_epoch();
            }

            at.phase = "aggregate";
            std::vector<ParamVector> halves;
            for (const ClientNode& c : clients) halves.push_back(c.params);
            ParamVector client_avg = fedavg(halves, client_weights);
            for (ClientNode& c : clients) overwrite_params(c, client_avg);
            rr.cloud_agg_rounds.push_back(p);
            seq.comm_mes_cloud += transfer_time(chalf_bytes, cfg.cloud_link);
            seq.cloud_compute += compute_time(cfg.compute.cloud,
                                              static_cast<double>(num_clients),
                                              static_cast<double>(chalf_count));
            seq.comm_mes_cloud += transfer_time(chalf_bytes, cfg.cloud_link);
            bytes_cloud += 2ULL * num_clients * static_cast<unsigned long long>(chalf_bytes);

            clock.advance(seq);

            at.phase = "evaluate";
            ParamVector snap = snapshot_split_model(split, clients, {server_params}, {1.0});
            auto [eval_loss, accuracy] = evaluate(cfg.stack, snap, eval);
            (void)eval_loss;
            push_record(rr, cfg, p, loss_acc.mean(), accuracy, clock.elapsed_s, 0, bytes_cloud);
            if (p == cfg.schedule.total_rounds) rr.final_params = std::move(snap);
        }
    } catch (const ProtocolError&) {
        throw;
    } catch (const Error& e) {
        rethrow_with_context(at, e);
    }
    rr.phases = clock.phases;
    rr.elapsed_s = clock.elapsed_s;
    return rr;
}

RunResult run_hiersfl(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                      const EvalSet& eval) {
    validate_run_inputs(cfg, ds, plan, true);
    const size_t epochs = cfg.schedule.epochs_per_round;
    const SplitSpec split = make_split(cfg.stack, cfg.cut_index);
    const size_t chalf_count = total_param_count(split.client_stack.layers);
    const size_t shalf_count = total_param_count(split.server_stack.layers);
    const double chalf_bytes = param_bytes(chalf_count);
    const std::vector<std::vector<size_t>> groups = cfg.topology.clients_of_mes();

    ParamVector start = init_params(cfg.stack, mix_seed(cfg.seed, seed_tags::kInit));
    auto [client_start, server_start] = split_params(split, start);
    std::vector<ClientNode> clients = make_clients(cfg, plan, client_start);

    std::vector<ParamVector> mes_server(cfg.topology.num_mes, server_start);
    std::vector<OptimizerState> mes_opt;
    std::vector<double> mes_data;  // |D^m|
    for (size_t m = 0; m < cfg.topology.num_mes; ++m) {
        mes_opt.push_back(OptimizerState::make(server_start.size(), cfg.learning_rate,
                                               cfg.lr_decay, cfg.momentum));
        double total = 0.0;
        for (size_t k : groups[m]) total += static_cast<double>(plan.client_samples[k].size());
        mes_data.push_back(total);
    }

    const size_t n_per_client = plan.client_samples[0].size();
    for (size_t k = 1; k < cfg.topology.num_clients; ++k) {
        if (plan.client_samples[k].size() != n_per_client) {
            throw ContractViolation("run_hiersfl: lockstep training needs equal client data sizes");
        }
    }
    const size_t num_steps = steps_per_epoch(n_per_client, cfg.batch_size);

    RunResult rr;
    SimClock clock;
    PhaseTracker at;
    try {
        for (size_t p = 1; p <= cfg.schedule.total_rounds; ++p) {
            at.round = p;
            LossAccumulator loss_acc;
            std::vector<PhaseBreakdown> branches(cfg.topology.num_mes);
            unsigned long long bytes_edge = 0;
            unsigned long long bytes_cloud = 0;

            for (size_t m = 0; m < cfg.topology.num_mes; ++m) {
                const std::vector<size_t>& members = groups[m];
                std::vector<double> member_weights;
                for (size_t k : members) member_weights.push_back(clients[k].n_samples);

                for (size_t e = 0; e < epochs; ++e) {
                    size_t cum_epoch = (p - 1) * epochs + e;
                    at.phase = "train";
                    std::vector<std::vector<size_t>> orders(members.size());
                    for (size_t i = 0; i < members.size(); ++i) {
                        orders[i] = epoch_order(plan, members[i], cfg.seed, cum_epoch);
                    }
                    for (size_t t = 0; t < num_steps; ++t) {
                        size_t startr = t * cfg.batch_size;
                        size_t rows = std::min(cfg.batch_size, n_per_client - startr);

                        std::vector<ClientForward> forwards(members.size());
                        for (size_t i = 0; i < members.size(); ++i) {
                            at.client = static_cast<ptrdiff_t>(members[i]);
                            Batch batch = extract_batch(ds, orders[i], startr, rows);
                            forwards[i] = client_forward(split, clients[members[i]].params,
                                                         batch.features, batch.labels);
                        }
                        at.client = -1;
                        branches[m].client_compute += compute_time(
                            cfg.compute.client, static_cast<double>(rows),
                            static_cast<double>(chalf_count));
                        branches[m].comm_client_mes +=
                            transfer_time(static_cast<double>(forwards[0].smashed.byte_size()),
                                          cfg.edge_link);

                        std::vector<ParamVector> server_grads;
                        std::vector<CutGradient> cut_grads(members.size());
                        for (size_t i = 0; i < members.size(); ++i) {
                            at.client = static_cast<ptrdiff_t>(members[i]);
                            bytes_edge += forwards[i].smashed.byte_size();
                            ServerStepResult res = server_forward_backward(split, mes_server[m],
                                                                           forwards[i].smashed);
                            loss_acc.add(res.loss, rows);
                            bytes_edge += res.cut_gradient.byte_size();
                            server_grads.push_back(std::move(res.gradient));
                            cut_grads[i] = std::move(res.cut_gradient);
                        }
                        at.client = -1;
                        branches[m].mes_compute += compute_time(
                            cfg.compute.mes, static_cast<double>(rows),
                            static_cast<double>(shalf_count));
                        ParamVector grad_avg = fedavg(server_grads, member_weights);
                        sgd_step(mes_server[m], grad_avg, mes_opt[m]);
                        branches[m].comm_client_mes +=
                            transfer_time(static_cast<double>(cut_grads[0].byte_size()),
                                          cfg.edge_link);

                        for (size_t i = 0; i < members.size(); ++i) {
                            at.client = static_cast<ptrdiff_t>(members[i]);
                            ParamVector grad = client_backward(split, clients[members[i]].params,
                                                               forwards[i], cut_grads[i]);
                            sgd_step(clients[members[i]].params, grad, clients[members[i]].opt);
                        }
                        at.client = -1;
                    }
                    at.phase = "perturb";
                    for (size_t k : members) {
                        at.client = static_cast<ptrdiff_t>(k);
                        perturb_params(clients[k].params, cfg.ldp, clients[k].noise);
                        clients[k].opt.advance_epoch();
                    }
                    at.client = -1;
                    mes_opt[m].advance_epoch();
                }
            }

            const bool edge_due = edge_agg_due(p, cfg.schedule);
            const bool cloud_due = cloud_agg_due(p, cfg.schedule);
            std::vector<ParamVector> mes_client_agg;
            if (edge_due) {
                at.phase = "edge-aggregate";
                rr.edge_agg_rounds.push_back(p);
                for (size_t m = 0; m < cfg.topology.num_mes; ++m) {
                    std::vector<ParamVector> halves;
                    std::vector<double> weights;
                    for (size_t k : groups[m]) {
                        halves.push_back(clients[k].params);
                        weights.push_back(clients[k].n_samples);
                    }
                    ParamVector agg = fedavg(halves, weights);
                    branches[m].comm_client_mes += transfer_time(chalf_bytes, cfg.edge_link);
                    branches[m].mes_compute +=
                        compute_time(cfg.compute.mes, static_cast<double>(groups[m].size()),
                                     static_cast<double>(chalf_count));
                    bytes_edge += 2ULL * groups[m].size() *
                                  static_cast<unsigned long long>(chalf_bytes);
                    if (!cloud_due) {
                        branches[m].comm_client_mes += transfer_time(chalf_bytes, cfg.edge_link);
                        for (size_t k : groups[m]) overwrite_params(clients[k], agg);
                    }
                    mes_client_agg.push_back(std::move(agg));
                }
            }

            PhaseBreakdown tail;
            if (cloud_due) {
                at.phase = "cloud-aggregate";
                rr.cloud_agg_rounds.push_back(p);
                ParamVector global = fedavg(mes_client_agg, mes_data);
                for (ClientNode& c : clients) overwrite_params(c, global);
                tail.comm_mes_cloud += transfer_time(chalf_bytes, cfg.cloud_link);
                tail.cloud_compute +=
                    compute_time(cfg.compute.cloud, static_cast<double>(cfg.topology.num_mes),
                                 static_cast<double>(chalf_count));
                tail.comm_mes_cloud += transfer_time(chalf_bytes, cfg.cloud_link);
                tail.comm_client_mes += transfer_time(chalf_bytes, cfg.edge_link);
                bytes_cloud += 2ULL * cfg.topology.num_mes *
                               static_cast<unsigned long long>(chalf_bytes);
            }

            PhaseBreakdown combined = parallel_max(branches);
            combined += tail;
            clock.advance(combined);

            at.phase = "evaluate";
            ParamVector snap = snapshot_split_model(split, clients, mes_server, mes_data);
            auto [eval_loss, accuracy] = evaluate(cfg.stack, snap, eval);
            (void)eval_loss;
            push_record(rr, cfg, p, loss_acc.mean(), accuracy, clock.elapsed_s, bytes_edge,
                        bytes_cloud);
            if (p == cfg.schedule.total_rounds) rr.final_params = std::move(snap);
        }
    } catch (const ProtocolError&) {
        throw;
    } catch (const Error& e) {
        rethrow_with_context(at, e);
    }
    rr.phases = clock.phases;
    rr.elapsed_s = clock.elapsed_s;
    return rr;
}

RunResult run_protocol(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                       const EvalSet& eval) {
    if (cfg.protocol == "fl") return run_fl(cfg, ds, plan, eval);
    if (cfg.protocol == "sfl") return run_sfl(cfg, ds, plan, eval);
    if (cfg.protocol == "hfl") return run_hfl(cfg, ds, plan, eval);
    if (cfg.protocol == "hiersfl") return run_hiersfl(cfg, ds, plan, eval);
    throw InputError("run_protocol: unknown protocol '" + cfg.protocol + "'");
}

}  // namespace hiersfl
