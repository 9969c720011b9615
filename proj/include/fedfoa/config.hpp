#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedfoa/data.hpp"
#include "fedfoa/encoder.hpp"
#include "fedfoa/format.hpp"

namespace fedfoa {

enum class Mode : std::uint8_t { fedfoa = 0, local_only = 1, fedavg = 2 };

inline std::string mode_to_string(Mode m) {
    switch (m) {
        case Mode::fedfoa: return "fedfoa";
        case Mode::local_only: return "local-only";
        case Mode::fedavg: return "fedavg";
    }
    throw std::logic_error("mode_to_string: bad mode");
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "fedfoa") return Mode::fedfoa;
    if (s == "local-only") return Mode::local_only;
    if (s == "fedavg") return Mode::fedavg;
    throw std::invalid_argument("unknown mode '" + s +
                                "' (want fedfoa, local-only, fedavg)");
}

struct DatasetSpec {
    DataSource source = DataSource::synthetic;
    std::string data_path;  // cifar10 batch directory
    std::size_t num_classes = 8;
    std::size_t input_dim = 32;
    std::size_t samples_per_class = 200;  // per client; the generator scales up
    std::size_t test_per_class = 50;      // shared held-out probe set
    double noise_scale = 0.3;

    bool operator==(const DatasetSpec&) const = default;
};

/// Full experiment configuration; flat key = value text on disk.
struct RunConfig {
    Mode mode = Mode::fedfoa;
    std::size_t num_clients = 4;
    std::vector<std::string> arch_assignment;  // empty = cycle the zoo
    std::size_t rounds = 30;
    std::size_t batches_per_round = 10;
    std::size_t batch_size = 64;      // m; each batch yields 2m view rows
    std::size_t projection_dim = 16;  // d
    double lr = 0.05;
    double tau = 0.5;
    double lambda = 0.01;
    std::size_t t_warm = 5;
    std::uint64_t seed = 1;
    DatasetSpec dataset;
    double aug_noise = 0.1;
    double aug_dropout = 0.1;
    bool aug_flip = false;
    bool normalize_before_qr = false;
    bool squared_residual = true;
    std::size_t peers_per_batch = 0;  // 0 = every gate-passing peer
    std::size_t probe_every = 5;
    std::size_t probe_epochs = 100;
    double probe_lr = 0.5;

    bool operator==(const RunConfig&) const = default;
};

inline std::string arch_for_client(const RunConfig& cfg, std::size_t client) {
    if (cfg.arch_assignment.empty()) {
        const auto zoo = encoder_zoo();
        return zoo[client % zoo.size()];
    }
    if (cfg.arch_assignment.size() == 1) return cfg.arch_assignment.front();
    return cfg.arch_assignment.at(client);
}

inline void validate_config(const RunConfig& cfg) {
    auto fail = [](const std::string& why) {
        throw std::invalid_argument("config: " + why);
    };
    if (cfg.num_clients == 0) fail("num_clients must be >= 1");
    if (cfg.batches_per_round == 0) fail("batches_per_round must be >= 1");
    if (cfg.batch_size == 0 || cfg.projection_dim == 0)
        fail("batch_size and projection_dim must be >= 1");
    if (cfg.batch_size < cfg.projection_dim)
        fail("batch_size (" + std::to_string(cfg.batch_size) +
             ") must be >= projection_dim (" +
             std::to_string(cfg.projection_dim) + ")");
    if (cfg.lr <= 0.0) fail("lr must be positive");
    if (cfg.tau <= 0.0) fail("tau must be positive");
    if (cfg.lambda < 0.0) fail("lambda must be >= 0");
    if (cfg.aug_noise < 0.0) fail("aug_noise must be >= 0");
    if (cfg.aug_dropout < 0.0 || cfg.aug_dropout > 1.0)
        fail("aug_dropout must be in [0,1]");
    if (cfg.probe_every == 0 || cfg.probe_epochs == 0)
        fail("probe_every and probe_epochs must be >= 1");
    if (cfg.probe_lr <= 0.0) fail("probe_lr must be positive");
    if (!cfg.arch_assignment.empty() && cfg.arch_assignment.size() != 1 &&
        cfg.arch_assignment.size() != cfg.num_clients)
        fail("arch_assignment needs 1 or num_clients entries");
    for (std::size_t i = 0; i < cfg.num_clients; ++i) {
        hidden_widths_for(arch_for_client(cfg, i));  // throws on unknown ids
    }
    if (cfg.mode == Mode::fedavg) {
        const std::string first = arch_for_client(cfg, 0);
        for (std::size_t i = 1; i < cfg.num_clients; ++i) {
            if (arch_for_client(cfg, i) != first)
                fail("fedavg needs a homogeneous arch_assignment");
        }
    }
    if (cfg.dataset.source == DataSource::synthetic) {
        if (cfg.dataset.num_classes == 0 || cfg.dataset.input_dim == 0 ||
            cfg.dataset.samples_per_class == 0)
            fail("synthetic dataset counts must be positive");
        if (cfg.dataset.noise_scale < 0.0) fail("noise_scale must be >= 0");
    } else if (cfg.dataset.data_path.empty()) {
        fail("cifar10 dataset needs data_path");
    }
}

// ---------------------------------------------------------------------------
// Flat key = value form
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::string join_csv(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ",";
        out += items[i];
    }
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument("config: bad bool '" + v + "'");
}

}  // namespace detail

/// Apply one key to a config; the CLI reuses this for flag overrides.
inline void apply_config_key(RunConfig& cfg, const std::string& key,
                             const std::string& value) {
    auto sz = [&value] { return static_cast<std::size_t>(parse_u64(value)); };
    if (key == "mode") cfg.mode = mode_from_string(value);
    else if (key == "num_clients") cfg.num_clients = sz();
    else if (key == "arch_assignment")
        cfg.arch_assignment =
            value == "cycle-zoo" ? std::vector<std::string>{}
                                 : detail::split_csv(value);
    else if (key == "rounds") cfg.rounds = sz();
    else if (key == "batches_per_round") cfg.batches_per_round = sz();
    else if (key == "batch_size") cfg.batch_size = sz();
    else if (key == "projection_dim") cfg.projection_dim = sz();
    else if (key == "lr") cfg.lr = parse_double(value);
    else if (key == "tau") cfg.tau = parse_double(value);
    else if (key == "lambda") cfg.lambda = parse_double(value);
    else if (key == "t_warm") cfg.t_warm = sz();
    else if (key == "seed") cfg.seed = parse_u64(value);
    else if (key == "dataset")
        cfg.dataset.source = value == "synthetic" ? DataSource::synthetic
                             : value == "cifar10"
                                 ? DataSource::cifar10
                                 : throw std::invalid_argument(
                                       "config: unknown dataset '" + value + "'");
    else if (key == "data_path") cfg.dataset.data_path = value;
    else if (key == "num_classes") cfg.dataset.num_classes = sz();
    else if (key == "input_dim") cfg.dataset.input_dim = sz();
    else if (key == "samples_per_class") cfg.dataset.samples_per_class = sz();
    else if (key == "test_per_class") cfg.dataset.test_per_class = sz();
    else if (key == "noise_scale") cfg.dataset.noise_scale = parse_double(value);
    else if (key == "aug_noise") cfg.aug_noise = parse_double(value);
    else if (key == "aug_dropout") cfg.aug_dropout = parse_double(value);
    else if (key == "aug_flip") cfg.aug_flip = detail::parse_bool(value);
    else if (key == "normalize_before_qr")
        cfg.normalize_before_qr = detail::parse_bool(value);
    else if (key == "squared_residual")
        cfg.squared_residual = detail::parse_bool(value);
    else if (key == "peers_per_batch") cfg.peers_per_batch = sz();
    else if (key == "probe_every") cfg.probe_every = sz();
    else if (key == "probe_epochs") cfg.probe_epochs = sz();
    else if (key == "probe_lr") cfg.probe_lr = parse_double(value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline RunConfig parse_config(std::istream& is) {
    RunConfig cfg;
    std::map<std::string, bool> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string text = detail::trim(line);
        if (text.empty() || text[0] == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " +
                                        std::to_string(line_no) +
                                        " is not 'key = value'");
        }
        const std::string key = detail::trim(text.substr(0, eq));
        const std::string value = detail::trim(text.substr(eq + 1));
        if (seen[key]) {
            throw std::invalid_argument("config: duplicate key '" + key +
                                        "' at line " + std::to_string(line_no));
        }
        seen[key] = true;
        apply_config_key(cfg, key, value);
    }
    return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
    std::stringstream ss(text);
    return parse_config(ss);
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file " + path);
    return parse_config(is);
}

inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "mode = " << mode_to_string(cfg.mode) << "\n";
    os << "num_clients = " << cfg.num_clients << "\n";
    os << "arch_assignment = "
       << (cfg.arch_assignment.empty() ? "cycle-zoo"
                                       : detail::join_csv(cfg.arch_assignment))
       << "\n";
    os << "rounds = " << cfg.rounds << "\n";
    os << "batches_per_round = " << cfg.batches_per_round << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "projection_dim = " << cfg.projection_dim << "\n";
    os << "lr = " << format_double(cfg.lr) << "\n";
    os << "tau = " << format_double(cfg.tau) << "\n";
    os << "lambda = " << format_double(cfg.lambda) << "\n";
    os << "t_warm = " << cfg.t_warm << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "dataset = "
       << (cfg.dataset.source == DataSource::synthetic ? "synthetic" : "cifar10")
       << "\n";
    if (!cfg.dataset.data_path.empty())
        os << "data_path = " << cfg.dataset.data_path << "\n";
    os << "num_classes = " << cfg.dataset.num_classes << "\n";
    os << "input_dim = " << cfg.dataset.input_dim << "\n";
    os << "samples_per_class = " << cfg.dataset.samples_per_class << "\n";
    os << "test_per_class = " << cfg.dataset.test_per_class << "\n";
    os << "noise_scale = " << format_double(cfg.dataset.noise_scale) << "\n";
    os << "aug_noise = " << format_double(cfg.aug_noise) << "\n";
    os << "aug_dropout = " << format_double(cfg.aug_dropout) << "\n";
    os << "aug_flip = " << (cfg.aug_flip ? "true" : "false") << "\n";
    os << "normalize_before_qr = "
       << (cfg.normalize_before_qr ? "true" : "false") << "\n";
    os << "squared_residual = " << (cfg.squared_residual ? "true" : "false")
       << "\n";
    os << "peers_per_batch = " << cfg.peers_per_batch << "\n";
    os << "probe_every = " << cfg.probe_every << "\n";
    os << "probe_epochs = " << cfg.probe_epochs << "\n";
    os << "probe_lr = " << format_double(cfg.probe_lr) << "\n";
    return os.str();
}

inline void save_config_file(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << serialize_config(cfg);
}

}  // namespace fedfoa
