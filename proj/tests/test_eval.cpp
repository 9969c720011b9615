#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "fedfoa/exporters.hpp"
#include "fedfoa/probe.hpp"

using fedfoa::CorrelationRecord;
using fedfoa::Dataset;
using fedfoa::DenseMatrix;
using fedfoa::EncoderModel;
using fedfoa::ProbePoint;
using fedfoa::RunConfig;

namespace {

std::string checkpoint_string(const EncoderModel& model) {
    std::stringstream ss;
    fedfoa::save_checkpoint(model, ss);
    return ss.str();
}

CorrelationRecord sample_record(std::uint32_t client_id, std::uint32_t round,
                                std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return fedfoa::make_record(
        client_id, round,
        {fedfoa::extract_correlation(fedfoa::gaussian_matrix(12, 4, rng))});
}

}  // namespace

TEST(ConfigTest, SerializeParseRoundTripsEveryField) {
    RunConfig cfg;
    cfg.mode = fedfoa::Mode::local_only;
    cfg.num_clients = 3;
    cfg.arch_assignment = {"mlp-64", "mlp-96", "mlp-128-64"};
    cfg.rounds = 17;
    cfg.batches_per_round = 4;
    cfg.batch_size = 32;
    cfg.projection_dim = 12;
    cfg.lr = 0.025;
    cfg.tau = 0.35;
    cfg.lambda = 0.125;
    cfg.t_warm = 2;
    cfg.seed = 987654321;
    cfg.dataset.source = fedfoa::DataSource::cifar10;
    cfg.dataset.data_path = "/data/cifar";
    cfg.dataset.num_classes = 10;
    cfg.dataset.input_dim = 3072;
    cfg.dataset.samples_per_class = 5000;
    cfg.dataset.test_per_class = 1000;
    cfg.dataset.noise_scale = 0.0;
    cfg.aug_noise = 0.2;
    cfg.aug_dropout = 0.05;
    cfg.aug_flip = true;
    cfg.normalize_before_qr = true;
    cfg.squared_residual = false;
    cfg.peers_per_batch = 2;
    cfg.probe_every = 3;
    cfg.probe_epochs = 50;
    cfg.probe_lr = 0.25;

    EXPECT_EQ(fedfoa::parse_config_string(fedfoa::serialize_config(cfg)), cfg);

    RunConfig defaults;
    EXPECT_EQ(fedfoa::parse_config_string(fedfoa::serialize_config(defaults)),
              defaults);
}

TEST(ConfigTest, EmptyAssignmentSerializesAsCycleZoo) {
    RunConfig cfg;
    const std::string text = fedfoa::serialize_config(cfg);
    EXPECT_NE(text.find("arch_assignment = cycle-zoo"), std::string::npos);
    EXPECT_TRUE(fedfoa::parse_config_string(text).arch_assignment.empty());
}

TEST(ConfigTest, CommentsAndBlankLinesAreIgnored) {
    RunConfig cfg = fedfoa::parse_config_string(
        "# a comment\n"
        "\n"
        "  rounds = 9\n"
        "lambda = 0.5   \n");
    EXPECT_EQ(cfg.rounds, 9u);
    EXPECT_EQ(cfg.lambda, 0.5);
    EXPECT_EQ(cfg.num_clients, RunConfig{}.num_clients);
}

TEST(ConfigTest, RejectsMalformedInput) {
    try {
        fedfoa::parse_config_string("rounds = 5\nnot a key value pair\n");
        FAIL() << "expected parse failure";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    EXPECT_THROW(fedfoa::parse_config_string("wibble = 3\n"),
                 std::invalid_argument);
    EXPECT_THROW(fedfoa::parse_config_string("rounds = 5\nrounds = 6\n"),
                 std::invalid_argument);
    EXPECT_THROW(fedfoa::parse_config_string("rounds = soon\n"),
                 std::runtime_error);
    EXPECT_THROW(fedfoa::parse_config_string("mode = turbo\n"),
                 std::invalid_argument);
    EXPECT_THROW(fedfoa::parse_config_string("dataset = imagenet\n"),
                 std::invalid_argument);
    EXPECT_THROW(fedfoa::parse_config_string("aug_flip = maybe\n"),
                 std::invalid_argument);
}

TEST(ConfigTest, ApplyKeyOverridesOneField) {
    RunConfig cfg;
    fedfoa::apply_config_key(cfg, "lambda", "0.75");
    EXPECT_EQ(cfg.lambda, 0.75);
    fedfoa::apply_config_key(cfg, "arch_assignment", "mlp-64,mlp-96");
    EXPECT_EQ(cfg.arch_assignment,
              (std::vector<std::string>{"mlp-64", "mlp-96"}));
    fedfoa::apply_config_key(cfg, "arch_assignment", "cycle-zoo");
    EXPECT_TRUE(cfg.arch_assignment.empty());
}

TEST(ConfigTest, ValidationCatchesBadCombinations) {
    RunConfig cfg;
    cfg.batch_size = 8;
    cfg.projection_dim = 16;
    EXPECT_THROW(fedfoa::validate_config(cfg), std::invalid_argument);

    cfg = RunConfig{};
    cfg.arch_assignment = {"mlp-4096"};
    EXPECT_THROW(fedfoa::validate_config(cfg), std::invalid_argument);

    cfg = RunConfig{};
    cfg.arch_assignment = {"mlp-64", "mlp-96"};  // neither 1 nor num_clients
    cfg.num_clients = 3;
    EXPECT_THROW(fedfoa::validate_config(cfg), std::invalid_argument);

    cfg = RunConfig{};
    cfg.dataset.source = fedfoa::DataSource::cifar10;
    EXPECT_THROW(fedfoa::validate_config(cfg), std::invalid_argument);

    EXPECT_NO_THROW(fedfoa::validate_config(RunConfig{}));
}

TEST(LinearProbeTest, SingleClassIsTrivialToClassify) {
    Dataset train = fedfoa::gen_synthetic(1, 8, 30, 0.3, 51);
    Dataset test = fedfoa::gen_synthetic(1, 8, 10, 0.3, 52);
    EncoderModel enc = fedfoa::make_encoder("mlp-64", 8, 4, 53);
    EXPECT_EQ(fedfoa::linear_probe(enc, train, test, 5, 0.5), 1.0);
}

TEST(LinearProbeTest, RandomLabelsScoreAtChance) {
    auto split = fedfoa::gen_synthetic_split(8, 16, 50, 50, 0.3, 54);
    std::mt19937_64 rng(55);
    std::uniform_int_distribution<std::uint32_t> lab(0, 7);
    for (auto& l : split.train.labels) l = lab(rng);
    for (auto& l : split.test.labels) l = lab(rng);

    EncoderModel enc = fedfoa::make_encoder("mlp-64", 16, 8, 56);
    const double acc = fedfoa::linear_probe(enc, split.train, split.test, 100, 0.5);
    EXPECT_NEAR(acc, 0.125, 0.05);
}

TEST(LinearProbeTest, SeparableClassesScoreWellAboveChance) {
    auto split = fedfoa::gen_synthetic_split(4, 16, 50, 25, 0.1, 57);
    EncoderModel enc = fedfoa::make_encoder("mlp-64", 16, 8, 58);
    const double acc = fedfoa::linear_probe(enc, split.train, split.test, 100, 0.5);
    EXPECT_GT(acc, 0.5);  // chance is 0.25
}

TEST(LinearProbeTest, DoesNotMutateTheEncoder) {
    auto split = fedfoa::gen_synthetic_split(3, 8, 20, 10, 0.3, 59);
    EncoderModel enc = fedfoa::make_encoder("mlp-96", 8, 4, 60);
    const std::string before = checkpoint_string(enc);
    fedfoa::linear_probe(enc, split.train, split.test, 20, 0.5);
    EXPECT_EQ(checkpoint_string(enc), before);
}

TEST(LinearProbeTest, RejectsBadLabelSetups) {
    auto split = fedfoa::gen_synthetic_split(3, 8, 20, 10, 0.3, 61);
    EncoderModel enc = fedfoa::make_encoder("mlp-64", 8, 4, 62);

    Dataset unlabeled = split.train;
    unlabeled.labels.clear();
    EXPECT_THROW(fedfoa::linear_probe(enc, unlabeled, split.test, 5, 0.5),
                 std::invalid_argument);
    EXPECT_THROW(fedfoa::linear_probe(enc, split.train, unlabeled, 5, 0.5),
                 std::invalid_argument);

    Dataset rogue = split.test;
    rogue.labels[0] = 3;  // train only defines classes 0..2
    try {
        fedfoa::linear_probe(enc, split.train, rogue, 5, 0.5);
        FAIL() << "expected label range failure";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos);
    }
}

TEST(SpearmanTest, MatchesHandComputedRankCorrelations) {
    std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> up{2.0, 4.0, 8.0, 16.0, 32.0};
    std::vector<double> down{5.0, 4.0, 3.0, 2.0, 1.0};
    EXPECT_NEAR(fedfoa::spearman(x, up), 1.0, 1e-12);
    EXPECT_NEAR(fedfoa::spearman(x, down), -1.0, 1e-12);

    // Tied ranks: x -> {1, 2.5, 2.5, 4} against {1, 2, 3, 4}.
    std::vector<double> tied{1.0, 2.0, 2.0, 3.0};
    std::vector<double> y{10.0, 20.0, 30.0, 40.0};
    EXPECT_NEAR(fedfoa::spearman(tied, y), 3.0 / std::sqrt(10.0), 1e-12);
}

TEST(SpearmanTest, RejectsDegenerateInput) {
    EXPECT_THROW(fedfoa::spearman({1.0, 2.0}, {1.0}), std::invalid_argument);
    EXPECT_THROW(fedfoa::spearman({1.0}, {2.0}), std::invalid_argument);
    EXPECT_THROW(fedfoa::spearman({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}),
                 std::invalid_argument);
}

TEST(TraceAccuracyTest, NeedsFiveCheckpoints) {
    std::vector<ProbePoint> points(4);
    EXPECT_THROW(fedfoa::trace_accuracy_correlation(points),
                 std::invalid_argument);

    points.resize(5);
    for (std::size_t i = 0; i < 5; ++i) {
        points[i].mean_trace = static_cast<double>(i);
        points[i].mean_accuracy = 0.1 * static_cast<double>(i) + 0.3;
    }
    EXPECT_NEAR(fedfoa::trace_accuracy_correlation(points), 1.0, 1e-12);
}

TEST(ExportersTest, MetricsCsvMatchesHandBuiltHistory) {
    fedfoa::RoundReport report;
    report.round = 2;
    fedfoa::ClientRow row;
    row.client_id = 0;
    row.arch_id = "mlp-64";
    row.losses.contrastive = 0.5;
    row.losses.regularizer = 0.25;
    row.trace_rbar = 3.5;
    row.bytes_up = 312;
    row.bytes_down = 624;
    report.clients.push_back(row);

    const std::string csv = fedfoa::metrics_csv({report});
    EXPECT_EQ(csv, std::string(fedfoa::kMetricsHeader) +
                       "\n2,0,mlp-64,0.5,0.25,3.5,312,624\n");
}

TEST(ExportersTest, MetricsNdjsonParsesBackToSameValues) {
    fedfoa::RoundReport report;
    report.round = 1;
    for (std::uint32_t c = 0; c < 2; ++c) {
        fedfoa::ClientRow row;
        row.client_id = c;
        row.arch_id = "mlp-96";
        row.losses.contrastive = 1.5 + c;
        row.losses.regularizer = 0.125;
        row.trace_rbar = 2.0;
        row.bytes_up = 100;
        row.bytes_down = 0;
        report.clients.push_back(row);
    }
    std::istringstream lines(fedfoa::metrics_ndjson({report}));
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j.at("round").get<std::uint32_t>(), 1u);
        EXPECT_EQ(j.at("client_id").get<std::uint32_t>(), count);
        EXPECT_EQ(j.at("arch_id").get<std::string>(), "mlp-96");
        EXPECT_EQ(j.at("loss_contrastive").get<double>(), 1.5 + count);
        EXPECT_EQ(j.at("loss_reg").get<double>(), 0.125);
        EXPECT_EQ(j.at("trace_rbar").get<double>(), 2.0);
        EXPECT_EQ(j.at("bytes_up").get<std::uint64_t>(), 100u);
        EXPECT_EQ(j.at("bytes_down").get<std::uint64_t>(), 0u);
        ++count;
    }
    EXPECT_EQ(count, 2u);
}

TEST(ExportersTest, HeatmapListsEachPairOncePerRound) {
    std::vector<CorrelationRecord> log;
    log.push_back(sample_record(2, 0, 71));
    log.push_back(sample_record(0, 0, 72));
    log.push_back(sample_record(1, 0, 73));
    const std::string csv = fedfoa::heatmap_csv(log, {0});

    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, fedfoa::kHeatmapHeader);
    std::vector<std::string> rows;
    while (std::getline(lines, line)) rows.push_back(line);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].substr(0, 6), "0,0,1,");
    EXPECT_EQ(rows[1].substr(0, 6), "0,0,2,");
    EXPECT_EQ(rows[2].substr(0, 6), "0,1,2,");
}

TEST(ExportersTest, HeatmapOfIdenticalRecordsIsAllZero) {
    CorrelationRecord a = sample_record(0, 3, 74);
    CorrelationRecord b = a;
    b.client_id = 1;
    const std::string csv = fedfoa::heatmap_csv({a, b}, {3});
    EXPECT_EQ(csv, std::string(fedfoa::kHeatmapHeader) + "\n3,0,1,0\n");
}

TEST(ExportersTest, HeatmapRejectsUnknownRoundAndSingleClientIsEmpty) {
    std::vector<CorrelationRecord> log{sample_record(0, 0, 75)};
    EXPECT_THROW(fedfoa::heatmap_csv(log, {1}), std::invalid_argument);
    EXPECT_EQ(fedfoa::heatmap_csv(log, {0}),
              std::string(fedfoa::kHeatmapHeader) + "\n");
}

TEST(ExportersTest, EmbeddingsCsvIsDeterministicAndBounded) {
    Dataset ds = fedfoa::gen_synthetic(3, 8, 10, 0.3, 76);
    EncoderModel enc = fedfoa::make_encoder("mlp-64", 8, 4, 77);

    EXPECT_EQ(fedfoa::embeddings_csv(enc, ds, 0, 1), "label,e0,e1,e2,e3\n");

    const std::string a = fedfoa::embeddings_csv(enc, ds, 12, 5);
    EXPECT_EQ(fedfoa::embeddings_csv(enc, ds, 12, 5), a);
    EXPECT_NE(fedfoa::embeddings_csv(enc, ds, 12, 6), a);

    std::istringstream lines(a);
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
        ++count;
    }
    EXPECT_EQ(count, 13u);  // header + 12 rows

    EXPECT_THROW(fedfoa::embeddings_csv(enc, ds, 31, 1), std::invalid_argument);
    Dataset unlabeled = ds;
    unlabeled.labels.clear();
    EXPECT_THROW(fedfoa::embeddings_csv(enc, unlabeled, 5, 1),
                 std::invalid_argument);
}

TEST(ExportersTest, ProbesCsvListsOneRowPerClient) {
    ProbePoint p;
    p.round = 4;
    p.client_accuracy = {0.5, 0.75};
    p.mean_accuracy = 0.625;
    p.mean_trace = 12.5;
    EXPECT_EQ(fedfoa::probes_csv({p}),
              std::string(fedfoa::kProbesHeader) +
                  "\n4,0,0.5,0.625,12.5\n4,1,0.75,0.625,12.5\n");
}

TEST(ExportersTest, CorrelationLogRoundTripsThroughNdjson) {
    std::vector<CorrelationRecord> log;
    log.push_back(sample_record(0, 0, 78));
    log.push_back(sample_record(1, 0, 79));
    log.push_back(sample_record(0, 1, 80));

    std::istringstream is(fedfoa::correlation_log_ndjson(log));
    const std::vector<CorrelationRecord> back =
        fedfoa::load_correlation_log_ndjson(is);
    ASSERT_EQ(back.size(), log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        EXPECT_EQ(back[i].client_id, log[i].client_id);
        EXPECT_EQ(back[i].round, log[i].round);
        EXPECT_EQ(back[i].trace, log[i].trace);
        EXPECT_EQ(back[i].batches_averaged, log[i].batches_averaged);
        EXPECT_EQ(fedfoa::max_abs_diff(back[i].r_bar, log[i].r_bar), 0.0);
    }

    std::istringstream broken("{\"client_id\": 0}\nnot json\n");
    try {
        fedfoa::load_correlation_log_ndjson(broken);
        FAIL() << "expected a parse failure";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(ProbedTrainingTest, CheckpointsLandOnTheConfiguredCadence) {
    RunConfig cfg;
    cfg.num_clients = 2;
    cfg.arch_assignment = {"mlp-64"};
    cfg.rounds = 4;
    cfg.batches_per_round = 2;
    cfg.batch_size = 16;
    cfg.projection_dim = 8;
    cfg.t_warm = 0;
    cfg.seed = 3;
    cfg.dataset.num_classes = 4;
    cfg.dataset.input_dim = 12;
    cfg.dataset.samples_per_class = 20;
    cfg.dataset.test_per_class = 5;
    cfg.probe_every = 2;
    cfg.probe_epochs = 20;

    fedfoa::ProbedRun run = fedfoa::run_probed_training(cfg);
    ASSERT_EQ(run.probes.size(), 2u);
    EXPECT_EQ(run.probes[0].round, 1u);
    EXPECT_EQ(run.probes[1].round, 3u);

    for (const ProbePoint& p : run.probes) {
        ASSERT_EQ(p.client_accuracy.size(), 2u);
        double sum = 0.0;
        for (double a : p.client_accuracy) {
            EXPECT_GE(a, 0.0);
            EXPECT_LE(a, 1.0);
            sum += a;
        }
        EXPECT_NEAR(p.mean_accuracy, sum / 2.0, 1e-15);

        const fedfoa::RoundReport& report =
            run.federation.history.at(p.round);
        const double trace_mean =
            (report.clients[0].trace_rbar + report.clients[1].trace_rbar) / 2.0;
        EXPECT_NEAR(p.mean_trace, trace_mean, 1e-15);
    }
}
