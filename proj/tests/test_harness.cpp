#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hiersfl/errors.hpp"
#include "hiersfl/harness.hpp"

using namespace hiersfl;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

ExperimentConfig small_config(const std::string& out_name) {
    ExperimentConfig cfg;
    cfg.protocol = "hiersfl";
    cfg.layer_dims = {8, 6, 5};
    cfg.cut_index = 1;
    cfg.num_clients = 4;
    cfg.num_mes = 2;
    cfg.rounds = 3;
    cfg.edge_agg_every = 1;
    cfg.cloud_agg_every = 2;
    cfg.epochs_per_round = 1;
    cfg.batch_size = 8;
    cfg.labels_per_client = 2;
    cfg.samples_per_label = 12;
    cfg.seed = 77;
    cfg.out = (std::filesystem::temp_directory_path() / out_name).string();
    return cfg;
}

size_t count_lines(const std::string& text) {
    size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("synthetic sizing covers the busiest label") {
    ExperimentConfig cfg;
    cfg.num_clients = 8;
    cfg.labels_per_client = 2;
    cfg.samples_per_label = 100;
    CHECK(synthetic_auto_samples(cfg) == 2000);

    cfg.num_clients = 20;
    cfg.samples_per_label = 400;
    CHECK(synthetic_auto_samples(cfg) == 16000);

    cfg.num_clients = 3;
    cfg.samples_per_label = 10;
    CHECK(synthetic_auto_samples(cfg) == 100);
}

TEST_CASE("build_dataset honors explicit and automatic sizing") {
    ExperimentConfig cfg = small_config("hiersfl_bd");
    Dataset ds = build_dataset(cfg);
    CHECK(ds.size() == synthetic_auto_samples(cfg));
    CHECK(ds.feature_dim() == 8);
    CHECK(ds.num_classes == 5);

    cfg.synthetic_samples = 500;
    CHECK(build_dataset(cfg).size() == 500);
}

TEST_CASE("protocol config mirrors the experiment config") {
    ExperimentConfig cfg = small_config("hiersfl_pc");
    cfg.ldp = "on";
    cfg.privacy_epsilon = 0.7;
    ProtocolConfig pc = to_protocol_config(cfg);
    CHECK(pc.protocol == "hiersfl");
    CHECK(pc.stack.param_count() == LayerStack::dense({8, 6, 5}).param_count());
    CHECK(pc.topology.num_clients == 4);
    CHECK(pc.topology.num_mes == 2);
    CHECK(pc.schedule.total_rounds == 3);
    CHECK(pc.schedule.p1 == 1);
    CHECK(pc.schedule.p2 == 2);
    CHECK(pc.ldp.enabled);
    CHECK(pc.ldp.epsilon == 0.7);
    CHECK(pc.edge_link.latency_s == cfg.edge_latency_s);
    CHECK(pc.cloud_link.bandwidth_Bps == cfg.cloud_bandwidth_bps);
    CHECK(pc.compute.client == cfg.client_compute_cost);
    CHECK(pc.seed == 77);
}

TEST_CASE("run_experiment writes stable metrics artifacts") {
    ExperimentConfig cfg = small_config("hiersfl_run1");
    ExperimentArtifacts art = run_experiment(cfg);

    std::string csv = slurp(art.rounds_csv_path);
    CHECK(csv.rfind("round,protocol,train_loss,accuracy,sim_time_s,bytes_client_mes,"
                    "bytes_mes_cloud\n",
                    0) == 0);
    CHECK(count_lines(csv) == 4);  // header + 3 rounds
    CHECK(csv.find("\n1,hiersfl,") != std::string::npos);
    CHECK(csv.find("\n2,hiersfl,") != std::string::npos);
    CHECK(csv.find("\n3,hiersfl,") != std::string::npos);

    std::string summary = slurp(art.summary_json_path);
    CHECK(summary.find("\"final_accuracy\"") != std::string::npos);
    CHECK(summary.find("\"protocol\": \"hiersfl\"") != std::string::npos);

    // Same seed, same bytes.
    cfg.out = (std::filesystem::temp_directory_path() / "hiersfl_run2").string();
    ExperimentArtifacts again = run_experiment(cfg);
    CHECK(slurp(again.rounds_csv_path) == csv);
    CHECK(slurp(again.summary_json_path) == summary);

    CHECK(art.run.rounds.back().accuracy == again.run.rounds.back().accuracy);
}

TEST_CASE("summary repeats the last round") {
    ExperimentConfig cfg = small_config("hiersfl_run3");
    cfg.protocol = "fl";
    ExperimentArtifacts art = run_experiment(cfg);
    std::string summary = slurp(art.summary_json_path);

    char expect[64];
    std::snprintf(expect, sizeof(expect), "\"rounds\": %zu", art.run.rounds.size());
    CHECK(summary.find(expect) != std::string::npos);
    CHECK(art.run.rounds.size() == 3);
    CHECK(summary.find("\"final_accuracy\"") != std::string::npos);

    // The summary's accuracy string must parse back to the recorded value.
    size_t pos = summary.find("\"final_accuracy\": ");
    double parsed = std::strtod(summary.c_str() + pos + 18, nullptr);
    CHECK(parsed == doctest::Approx(art.run.rounds.back().accuracy).epsilon(1e-12));
}

TEST_CASE("holdout evaluation pool") {
    ExperimentConfig cfg = small_config("hiersfl_run4");
    cfg.eval_holdout = "on";
    ExperimentArtifacts art = run_experiment(cfg);
    CHECK(art.run.rounds.size() == 3);
    for (const RoundRecord& r : art.run.rounds) {
        CHECK(r.accuracy >= 0.0);
        CHECK(r.accuracy <= 1.0);
    }
}

TEST_CASE("comparison grid runs every cell and survives bad ones") {
    ExperimentConfig cfg = small_config("hiersfl_cmp");
    cfg.rounds = 4;
    cfg.edge_agg_every = 2;
    cfg.cloud_agg_every = 2;

    std::vector<ComparisonCell> cells =
        compare_protocols(cfg, {"fl", "sfl", "hfl", "hiersfl", "bogus"}, {{4, 2}});
    REQUIRE(cells.size() == 5);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(cells[i].status == "ok");
        CHECK(cells[i].final_accuracy > 0.0);
        CHECK(cells[i].total_sim_time_s > 0.0);
    }
    CHECK(cells[4].status.rfind("error: ", 0) == 0);
    CHECK(cells[4].protocol == "bogus");

    // Cloud-link traffic: intermittent sync in hiersfl versus every-step
    // smashed-data exchange plus every-round sync in sfl.
    const ComparisonCell* sfl = &cells[1];
    const ComparisonCell* hier = &cells[3];
    CHECK(hier->total_bytes_mes_cloud < sfl->total_bytes_mes_cloud);

    std::string csv = render_comparison_csv(cells);
    CHECK(csv.rfind("protocol,num_clients,num_mes,final_accuracy,total_sim_time_s,"
                    "total_bytes_client_mes,total_bytes_mes_cloud,status\n",
                    0) == 0);
    CHECK(count_lines(csv) == 6);
}

TEST_CASE("comparison grid covers multiple topologies deterministically") {
    ExperimentConfig cfg = small_config("hiersfl_cmp2");
    std::vector<ComparisonCell> cells = compare_protocols(cfg, {"hfl"}, {{4, 2}, {6, 3}});
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].num_clients == 4);
    CHECK(cells[1].num_clients == 6);
    CHECK(cells[0].status == "ok");
    CHECK(cells[1].status == "ok");

    std::vector<ComparisonCell> again = compare_protocols(cfg, {"hfl"}, {{4, 2}, {6, 3}});
    CHECK(render_comparison_csv(again) == render_comparison_csv(cells));

    std::string path = run_comparison(cfg, {"hfl"}, {{4, 2}});
    CHECK(slurp(path).rfind("protocol,", 0) == 0);
}

TEST_CASE("idx datasets flow through the harness") {
    // 2x2 images, 60 samples, 3 classes.
    auto tmp = std::filesystem::temp_directory_path();
    std::string imgs = (tmp / "hiersfl_h.images").string();
    std::string labs = (tmp / "hiersfl_h.labels").string();
    {
        std::ofstream io(imgs, std::ios::binary | std::ios::trunc);
        auto be32 = [&](uint32_t v) {
            unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
            io.write(reinterpret_cast<char*>(b), 4);
        };
        be32(0x803);
        be32(60);
        be32(2);
        be32(2);
        for (int i = 0; i < 60 * 4; ++i) io.put(static_cast<char>(i % 256));
        std::ofstream lo(labs, std::ios::binary | std::ios::trunc);
        auto lbe32 = [&](uint32_t v) {
            unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
            lo.write(reinterpret_cast<char*>(b), 4);
        };
        lbe32(0x801);
        lbe32(60);
        for (int i = 0; i < 60; ++i) lo.put(static_cast<char>(i % 3));
    }

    ExperimentConfig cfg;
    cfg.dataset = "idx";
    cfg.idx_images = imgs;
    cfg.idx_labels = labs;
    cfg.protocol = "fl";
    cfg.layer_dims = {4, 3, 3};
    cfg.num_clients = 2;
    cfg.num_mes = 1;
    cfg.rounds = 2;
    cfg.edge_agg_every = 1;
    cfg.cloud_agg_every = 1;
    cfg.batch_size = 8;
    cfg.labels_per_client = 1;
    cfg.samples_per_label = 10;
    cfg.seed = 5;
    cfg.out = (tmp / "hiersfl_idx_out").string();

    ExperimentArtifacts art = run_experiment(cfg);
    CHECK(art.run.rounds.size() == 2);

    cfg.layer_dims = {5, 3, 3};
    CHECK_THROWS_AS(build_dataset(cfg), ConfigError);
    cfg.layer_dims = {4, 3, 4};
    CHECK_THROWS_AS(build_dataset(cfg), ConfigError);
}
