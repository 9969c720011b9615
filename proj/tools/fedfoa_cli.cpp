#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedfoa/exporters.hpp"
#include "fedfoa/probe.hpp"
#include "fedfoa/selfcheck.hpp"

namespace {

namespace fs = std::filesystem;

struct Overrides {
    std::vector<std::string> sets;  // raw key=value pairs
    std::optional<std::string> mode;
    std::optional<std::size_t> clients;
    std::optional<std::size_t> rounds;
    std::optional<double> lambda;
    std::optional<double> lr;
};

void add_override_flags(CLI::App* cmd, std::string& config_path,
                        Overrides& ov) {
    cmd->add_option("--config", config_path, "Config file (key = value lines)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", ov.sets,
                    "Override any config key, e.g. --set tau=0.25")
        ->type_name("KEY=VALUE");
    cmd->add_option("--mode", ov.mode, "Training mode")
        ->check(CLI::IsMember({"fedfoa", "local-only", "fedavg"}));
    cmd->add_option("--clients", ov.clients, "Number of clients");
    cmd->add_option("--rounds", ov.rounds, "Number of training rounds");
    cmd->add_option("--lambda", ov.lambda, "Alignment regularizer weight");
    cmd->add_option("--lr", ov.lr, "SGD learning rate");
}

fedfoa::RunConfig resolve_config(const std::string& config_path,
                                 const Overrides& ov) {
    fedfoa::RunConfig cfg;
    if (!config_path.empty()) cfg = fedfoa::load_config_file(config_path);
    for (const std::string& kv : ov.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects key=value, got '" + kv +
                                        "'");
        }
        fedfoa::apply_config_key(cfg, fedfoa::detail::trim(kv.substr(0, eq)),
                                 fedfoa::detail::trim(kv.substr(eq + 1)));
    }
    if (ov.mode) cfg.mode = fedfoa::mode_from_string(*ov.mode);
    if (ov.clients) cfg.num_clients = *ov.clients;
    if (ov.rounds) cfg.rounds = *ov.rounds;
    if (ov.lambda) cfg.lambda = *ov.lambda;
    if (ov.lr) cfg.lr = *ov.lr;
    return cfg;
}

/// The same labeled split a training run with this config would see.
fedfoa::SyntheticSplit load_eval_data(const fedfoa::RunConfig& cfg) {
    if (cfg.dataset.source == fedfoa::DataSource::synthetic) {
        return fedfoa::gen_synthetic_split(
            cfg.dataset.num_classes, cfg.dataset.input_dim,
            cfg.dataset.samples_per_class * cfg.num_clients,
            cfg.dataset.test_per_class, cfg.dataset.noise_scale,
            fedfoa::derive_seed(cfg.seed, fedfoa::stream_dataset));
    }
    fedfoa::Cifar10 cifar = fedfoa::load_cifar10(cfg.dataset.data_path);
    return {std::move(cifar.train), std::move(cifar.test)};
}

int cmd_train(const fedfoa::RunConfig& cfg, const std::string& out_dir) {
    fedfoa::validate_config(cfg);
    fs::create_directories(out_dir);

    fedfoa::ProbedRun run = fedfoa::run_probed_training(cfg);
    const fedfoa::Federation& f = run.federation;

    fedfoa::save_config_file(cfg, (fs::path(out_dir) / "config.txt").string());
    fedfoa::save_text_file((fs::path(out_dir) / "metrics.csv").string(),
                           fedfoa::metrics_csv(f.history));
    fedfoa::save_text_file((fs::path(out_dir) / "metrics.ndjson").string(),
                           fedfoa::metrics_ndjson(f.history));
    fedfoa::save_text_file((fs::path(out_dir) / "correlations.ndjson").string(),
                           fedfoa::correlation_log_ndjson(f.bank.log()));
    fedfoa::save_text_file((fs::path(out_dir) / "probes.csv").string(),
                           fedfoa::probes_csv(run.probes));
    for (const fedfoa::ClientState& client : f.clients) {
        fedfoa::save_checkpoint_file(
            client.model,
            (fs::path(out_dir) /
             ("client_" + std::to_string(client.client_id) + ".ckpt"))
                .string());
    }

    for (const fedfoa::ProbePoint& p : run.probes) {
        std::cout << "round " << p.round
                  << "  probe_accuracy=" << fedfoa::format_double(p.mean_accuracy)
                  << "  mean_trace=" << fedfoa::format_double(p.mean_trace)
                  << "\n";
    }
    std::cout << "trained " << f.history.size() << " rounds ("
              << fedfoa::mode_to_string(cfg.mode) << ", " << cfg.num_clients
              << " clients), wrote " << out_dir << "\n";
    return 0;
}

int cmd_probe(const fedfoa::RunConfig& cfg, const std::string& ckpt_path) {
    const fedfoa::EncoderModel model = fedfoa::load_checkpoint_file(ckpt_path);
    const fedfoa::SyntheticSplit data = load_eval_data(cfg);
    if (data.test.size() == 0) {
        throw std::invalid_argument(
            "probe: config yields no held-out test samples");
    }
    const double acc = fedfoa::linear_probe(model, data.train, data.test,
                                            cfg.probe_epochs, cfg.probe_lr);
    std::cout << "arch " << model.arch_id << "  accuracy "
              << fedfoa::format_double(acc) << "\n";
    return 0;
}

int cmd_heatmap(const std::string& log_path,
                const std::vector<std::uint32_t>& rounds,
                const std::string& out_path) {
    const std::vector<fedfoa::CorrelationRecord> log =
        fedfoa::load_correlation_log_file(log_path);
    const std::string csv = fedfoa::heatmap_csv(log, rounds);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        fedfoa::save_text_file(out_path, csv);
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

int cmd_embed(const fedfoa::RunConfig& cfg, const std::string& ckpt_path,
              std::optional<std::size_t> count, std::uint64_t sample_seed,
              const std::string& out_path) {
    const fedfoa::EncoderModel model = fedfoa::load_checkpoint_file(ckpt_path);
    const fedfoa::SyntheticSplit data = load_eval_data(cfg);
    const fedfoa::Dataset& ds = data.test.size() > 0 ? data.test : data.train;
    const std::size_t n = count ? *count : std::min<std::size_t>(256, ds.size());
    const std::string csv = fedfoa::embeddings_csv(model, ds, n, sample_seed);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        fedfoa::save_text_file(out_path, csv);
        std::cout << "wrote " << n << " embeddings to " << out_path << "\n";
    }
    return 0;
}

int cmd_check() {
    const std::vector<fedfoa::SuiteResult> suites = fedfoa::run_all_suites();
    std::size_t failed = 0;
    for (const fedfoa::SuiteResult& s : suites) {
        std::cout << (s.passed() ? "ok   " : "FAIL ") << s.name << "  cases="
                  << s.cases << "  failures=" << s.failures
                  << "  worst=" << fedfoa::format_double(s.worst)
                  << "  limit=" << fedfoa::format_double(s.limit) << "  ("
                  << fedfoa::format_double(s.seconds) << "s)\n";
        if (!s.passed()) ++failed;
    }
    if (failed > 0) {
        std::cout << failed << " of " << suites.size() << " suites failed\n";
        return 1;
    }
    std::cout << "all " << suites.size() << " suites passed\n";
    return 0;
}

int cmd_commcost(const fedfoa::RunConfig& cfg) {
    const std::uint64_t round_wise =
        fedfoa::comm_cost(cfg, fedfoa::CommMode::round_wise);
    const std::uint64_t batch_wise =
        fedfoa::comm_cost(cfg, fedfoa::CommMode::batch_wise);
    std::cout << "projection_dim " << cfg.projection_dim << ", "
              << cfg.batches_per_round << " batches/round\n";
    std::cout << "round-wise  " << round_wise << " bytes/client/round\n";
    std::cout << "batch-wise  " << batch_wise << " bytes/client/round\n";
    std::cout << "ratio       " << batch_wise / round_wise << "x\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Federated self-supervised training with correlation-matrix exchange"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Run a federated training job");
    std::string train_config;
    Overrides train_ov;
    std::uint64_t seed = 0;
    std::string out_dir = "fedfoa-run";
    add_override_flags(train, train_config, train_ov);
    train->add_option("--seed", seed, "Master seed for the run")->required();
    train->add_option("--out", out_dir, "Output directory")
        ->capture_default_str();

    // probe
    auto* probe = app.add_subcommand(
        "probe", "Linear-probe accuracy of a saved encoder");
    std::string probe_config, probe_ckpt;
    Overrides probe_ov;
    add_override_flags(probe, probe_config, probe_ov);
    probe->add_option("--checkpoint", probe_ckpt, "Encoder checkpoint")
        ->required()
        ->check(CLI::ExistingFile);

    // heatmap
    auto* heatmap = app.add_subcommand(
        "heatmap", "Pairwise correlation distances from a training log");
    std::string heatmap_log, heatmap_out;
    std::vector<std::uint32_t> heatmap_rounds;
    heatmap->add_option("--log", heatmap_log, "correlations.ndjson from train")
        ->required()
        ->check(CLI::ExistingFile);
    heatmap->add_option("--rounds", heatmap_rounds, "Rounds to export")
        ->required()
        ->delimiter(',');
    heatmap->add_option("--out", heatmap_out, "Output CSV (default stdout)");

    // embed
    auto* embed = app.add_subcommand(
        "embed", "Export projection-space embeddings of a saved encoder");
    std::string embed_config, embed_ckpt, embed_out;
    Overrides embed_ov;
    std::optional<std::size_t> embed_count;
    std::uint64_t embed_seed = 1;
    add_override_flags(embed, embed_config, embed_ov);
    embed->add_option("--checkpoint", embed_ckpt, "Encoder checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    embed->add_option("--count", embed_count, "Samples to embed");
    embed->add_option("--sample-seed", embed_seed, "Subsample seed")
        ->capture_default_str();
    embed->add_option("--out", embed_out, "Output CSV (default stdout)");

    // check
    app.add_subcommand("check",
                       "Run the numerical self-check suites and report");

    // commcost
    auto* commcost = app.add_subcommand(
        "commcost", "Per-round communication cost of the configured run");
    std::string commcost_config;
    Overrides commcost_ov;
    add_override_flags(commcost, commcost_config, commcost_ov);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            fedfoa::RunConfig cfg = resolve_config(train_config, train_ov);
            cfg.seed = seed;
            return cmd_train(cfg, out_dir);
        }
        if (probe->parsed()) {
            return cmd_probe(resolve_config(probe_config, probe_ov),
                             probe_ckpt);
        }
        if (heatmap->parsed()) {
            return cmd_heatmap(heatmap_log, heatmap_rounds, heatmap_out);
        }
        if (embed->parsed()) {
            return cmd_embed(resolve_config(embed_config, embed_ov), embed_ckpt,
                             embed_count, embed_seed, embed_out);
        }
        if (app.get_subcommand("check")->parsed()) {
            return cmd_check();
        }
        if (commcost->parsed()) {
            return cmd_commcost(resolve_config(commcost_config, commcost_ov));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
