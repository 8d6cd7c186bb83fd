#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "hiersfl/config.hpp"
#include "hiersfl/errors.hpp"
#include "hiersfl/harness.hpp"
#include "hiersfl/ldp.hpp"
#include "hiersfl/nn.hpp"
#include "hiersfl/protocols.hpp"
#include "hiersfl/rng.hpp"
#include "hiersfl/split.hpp"

namespace {

using hiersfl::ExperimentConfig;

const std::vector<std::pair<std::string, std::string>>& key_help() {
    static const std::vector<std::pair<std::string, std::string>> help = {
        {"protocol", "fl | sfl | hfl | hiersfl"},
        {"dataset", "synthetic | idx"},
        {"idx-images", "IDX image file (dataset = idx)"},
        {"idx-labels", "IDX label file (dataset = idx)"},
        {"layer-dims", "comma-separated dense layer widths"},
        {"cut-index", "client/server layer boundary (split protocols)"},
        {"num-clients", "number of clients K"},
        {"num-mes", "number of edge servers M"},
        {"rounds", "global rounds P"},
        {"edge-agg-every", "MES aggregation period p1 (rounds)"},
        {"cloud-agg-every", "cloud aggregation period p2 (MES aggregations)"},
        {"epochs-per-round", "local epochs E per round"},
        {"batch-size", "mini-batch size b"},
        {"learning-rate", "initial learning rate"},
        {"lr-decay", "per-epoch learning-rate decay factor"},
        {"momentum", "SGD momentum coefficient"},
        {"ldp", "off | on"},
        {"privacy-epsilon", "privacy budget per perturbation"},
        {"clip-bound", "parameter clip bound C"},
        {"labels-per-client", "distinct labels per client"},
        {"samples-per-label", "samples per (client, label) slot"},
        {"synthetic-samples", "synthetic dataset size (0 = auto)"},
        {"eval-holdout", "off | on: evaluate on held-out synthetic pool"},
        {"edge-latency-s", "client<->MES link latency (s)"},
        {"edge-bandwidth-bps", "client<->MES bandwidth (bytes/s)"},
        {"cloud-latency-s", "MES<->cloud link latency (s)"},
        {"cloud-bandwidth-bps", "MES<->cloud bandwidth (bytes/s)"},
        {"client-compute-cost", "client seconds per sample-parameter"},
        {"mes-compute-cost", "MES seconds per sample-parameter"},
        {"cloud-compute-cost", "cloud seconds per sample-parameter"},
        {"seed", "master seed"},
        {"out", "output directory"},
    };
    return help;
}

struct KeyCapture {
    std::map<std::string, std::string> values;

    void attach(CLI::App* cmd) {
        for (const auto& [key, desc] : key_help()) {
            cmd->add_option("--" + key, values[key], desc);
        }
    }

    std::vector<std::pair<std::string, std::string>> overrides(const CLI::App* cmd) const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [key, desc] : key_help()) {
            const CLI::Option* opt = cmd->get_option("--" + key);
            if (opt->count() > 0) out.emplace_back(key, values.at(key));
        }
        return out;
    }
};

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= csv.size()) {
        size_t comma = csv.find(',', pos);
        std::string part =
            csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!part.empty()) out.push_back(part);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::vector<std::pair<size_t, size_t>> parse_topologies(const std::string& csv) {
    std::vector<std::pair<size_t, size_t>> out;
    for (const std::string& cell : split_list(csv)) {
        size_t x = cell.find('x');
        if (x == std::string::npos || x == 0 || x + 1 >= cell.size()) {
            throw hiersfl::ConfigError("topologies: expected KxM entries, got '" + cell + "'");
        }
        out.emplace_back(std::stoull(cell.substr(0, x)), std::stoull(cell.substr(x + 1)));
    }
    return out;
}

// ---- selftest oracle suites ------------------------------------------------

bool selftest_split_equivalence() {
    using namespace hiersfl;
    LayerStack stack = LayerStack::dense({784, 64, 32, 10});
    ParamVector params = init_params(stack, 7001);
    Rng rng(7002);
    const size_t batch = 8;
    Tensor2D x(batch, 784);
    for (double& v : x.data) v = rng.next_double();
    std::vector<int> labels(batch);
    for (int& l : labels) l = static_cast<int>(rng.next_below(10));

    ForwardResult mono = forward(stack, params, x);
    double mono_loss = loss_cross_entropy(mono.output(), labels);
    ParamVector mono_grad = backward(stack, params, mono, labels);

    double worst = 0.0;
    for (size_t cut = 1; cut < stack.depth(); ++cut) {
        SplitSpec split = make_split(stack, cut);
        auto [cp, sp] = split_params(split, params);
        ClientForward cf = client_forward(split, cp, x, labels);
        ServerStepResult srv = server_forward_backward(split, sp, cf.smashed);
        ParamVector cg = client_backward(split, cp, cf, srv.cut_gradient);
        ParamVector joined = join_params(split, cg, srv.gradient);
        worst = std::max(worst, std::fabs(srv.loss - mono_loss));
        for (size_t i = 0; i < joined.size(); ++i) {
            worst = std::max(worst, std::fabs(joined.values[i] - mono_grad.values[i]));
        }
    }
    bool ok = worst <= 1e-9;
    std::printf("%s split-equivalence: max deviation %.3e across %zu cuts\n",
                ok ? "ok" : "FAIL", worst, stack.depth() - 1);
    return ok;
}

bool selftest_fedavg() {
    using namespace hiersfl;
    Rng rng(7003);
    double worst = 0.0;
    bool hull_ok = true;
    for (int c = 0; c < 100; ++c) {
        size_t models = 1 + rng.next_below(4);
        size_t dim = 1 + rng.next_below(16);
        std::vector<LayerShape> shapes{{Activation::SoftmaxOutput, 0, dim}};
        std::vector<ParamVector> ms;
        std::vector<double> ws;
        for (size_t k = 0; k < models; ++k) {
            ParamVector m = ParamVector::zeros(shapes);
            for (double& v : m.values) v = rng.next_double() * 4.0 - 2.0;
            ms.push_back(std::move(m));
            ws.push_back(1.0 + rng.next_below(100));
        }
        ParamVector avg = fedavg(ms, ws);
        double total = 0.0;
        for (double w : ws) total += w;
        for (size_t i = 0; i < dim; ++i) {
            double expect = 0.0;
            double lo = ms[0].values[i];
            double hi = lo;
            for (size_t k = 0; k < models; ++k) {
                expect += ws[k] / total * ms[k].values[i];
                lo = std::min(lo, ms[k].values[i]);
                hi = std::max(hi, ms[k].values[i]);
            }
            worst = std::max(worst, std::fabs(avg.values[i] - expect));
            if (avg.values[i] < lo - 1e-12 || avg.values[i] > hi + 1e-12) hull_ok = false;
        }
    }
    bool ok = worst <= 1e-12 && hull_ok;
    std::printf("%s fedavg: max deviation %.3e over 100 cases, hull %s\n", ok ? "ok" : "FAIL",
                worst, hull_ok ? "held" : "violated");
    return ok;
}

bool selftest_schedule() {
    using namespace hiersfl;
    Rng rng(7004);
    size_t checked = 0;
    bool ok = true;
    for (int c = 0; c < 200 && ok; ++c) {
        Schedule s;
        s.total_rounds = 1 + rng.next_below(50);
        s.p1 = 1 + rng.next_below(5);
        s.p2 = 1 + rng.next_below(5);
        std::vector<size_t> edge_oracle;
        for (size_t p = s.p1; p <= s.total_rounds; p += s.p1) edge_oracle.push_back(p);
        std::vector<size_t> cloud_oracle;
        for (size_t p = s.p1 * s.p2; p <= s.total_rounds; p += s.p1 * s.p2) {
            cloud_oracle.push_back(p);
        }
        std::vector<size_t> edge_pred;
        std::vector<size_t> cloud_pred;
        for (size_t p = 1; p <= s.total_rounds; ++p) {
            if (edge_agg_due(p, s)) edge_pred.push_back(p);
            if (cloud_agg_due(p, s)) cloud_pred.push_back(p);
        }
        ok = edge_pred == edge_oracle && cloud_pred == cloud_oracle;
        ++checked;
    }
    std::printf("%s schedule: %zu random (P, p1, p2) timetables matched\n", ok ? "ok" : "FAIL",
                checked);
    return ok;
}

bool selftest_laplace() {
    using namespace hiersfl;
    const double theta = 1.0;
    const double eps = 0.5;
    const double scale = laplace_scale(theta, eps);
    Rng rng(7005);
    const size_t n = 100000;
    double sum = 0.0;
    double abs_sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double x = sample_laplace(rng, scale);
        sum += x;
        abs_sum += std::fabs(x);
    }
    double mean = sum / static_cast<double>(n);
    double mean_abs = abs_sum / static_cast<double>(n);
    bool ok = scale == 2.0 && std::fabs(mean) <= 0.05 &&
              std::fabs(mean_abs - scale) <= 0.02 * scale;
    std::printf("%s laplace: scale %g, mean %.4f, mean|x| %.4f over %zu draws\n",
                ok ? "ok" : "FAIL", scale, mean, mean_abs, n);
    return ok;
}

int run_selftest() {
    bool ok = true;
    ok &= selftest_split_equivalence();
    ok &= selftest_fedavg();
    ok &= selftest_schedule();
    ok &= selftest_laplace();
    std::printf("%s\n", ok ? "selftest passed" : "selftest FAILED");
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical split federated learning simulator"};
    app.require_subcommand(1);

    std::string run_config;
    KeyCapture run_keys;
    CLI::App* run_cmd = app.add_subcommand("run", "run one experiment and emit metrics");
    run_cmd->add_option("--config", run_config, "config file (key = value lines)");
    run_keys.attach(run_cmd);

    std::string cmp_config;
    std::string cmp_protocols = "fl,sfl,hfl,hiersfl";
    std::string cmp_topologies;
    KeyCapture cmp_keys;
    CLI::App* cmp_cmd =
        app.add_subcommand("compare", "run a protocol/topology grid on shared data");
    cmp_cmd->add_option("--config", cmp_config, "config file (key = value lines)");
    cmp_cmd->add_option("--protocols", cmp_protocols, "comma-separated protocol list");
    cmp_cmd->add_option("--topologies", cmp_topologies,
                        "comma-separated KxM list (default: configured topology)");
    cmp_keys.attach(cmp_cmd);

    std::string val_config;
    KeyCapture val_keys;
    CLI::App* val_cmd =
        app.add_subcommand("validate-config", "check a config and print its effective form");
    val_cmd->add_option("--config", val_config, "config file (key = value lines)");
    val_keys.attach(val_cmd);

    app.add_subcommand("selftest", "run the built-in oracle suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            ExperimentConfig cfg =
                hiersfl::assemble_config(run_config, run_keys.overrides(run_cmd));
            hiersfl::ExperimentArtifacts art = hiersfl::run_experiment(cfg);
            std::printf("wrote %s\n", art.rounds_csv_path.c_str());
            std::printf("wrote %s\n", art.summary_json_path.c_str());
            const hiersfl::RoundRecord& last = art.run.rounds.back();
            std::printf("final accuracy %.4f, train loss %.4f, simulated %.3f s\n",
                        last.accuracy, last.train_loss, art.run.elapsed_s);
            return 0;
        }
        if (cmp_cmd->parsed()) {
            ExperimentConfig cfg =
                hiersfl::assemble_config(cmp_config, cmp_keys.overrides(cmp_cmd));
            std::vector<std::string> protocols = split_list(cmp_protocols);
            std::vector<std::pair<size_t, size_t>> topologies =
                cmp_topologies.empty()
                    ? std::vector<std::pair<size_t, size_t>>{{cfg.num_clients, cfg.num_mes}}
                    : parse_topologies(cmp_topologies);
            std::string path = hiersfl::run_comparison(cfg, protocols, topologies);
            std::printf("wrote %s\n", path.c_str());
            return 0;
        }
        if (val_cmd->parsed()) {
            ExperimentConfig cfg =
                hiersfl::assemble_config(val_config, val_keys.overrides(val_cmd));
            std::fputs(hiersfl::serialize_config(cfg).c_str(), stdout);
            return 0;
        }
        return run_selftest();
    } catch (const hiersfl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
