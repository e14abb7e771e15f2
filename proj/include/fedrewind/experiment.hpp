#pragma once

// Experiment configuration, orchestration and result files.
//
//   metrics.csv  round,FA,FF,PFA,acc_0_0,acc_0_1,...   one row per evaluation
//   run.json     {"config": {...}, "final": {...}, "history": [...], ...}
//   sweep.csv    alpha,rewind,final_FA                   one row per sweep point

#include "fedrewind/dataset.hpp"
#include "fedrewind/federation.hpp"
#include "fedrewind/idx.hpp"
#include "fedrewind/metrics.hpp"
#include "fedrewind/nn.hpp"
#include "fedrewind/partition.hpp"
#include "fedrewind/synthetic.hpp"
#include "fedrewind/task_stream.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrewind {

inline constexpr const char* version = "0.1.0";

enum class DatasetKind { mnist, blobs };
enum class Algorithm { federated, standalone, joint };

inline std::string_view to_string(DatasetKind d) { return d == DatasetKind::mnist ? "mnist" : "blobs"; }
inline std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::federated: return "federated";
        case Algorithm::standalone: return "standalone";
        case Algorithm::joint: return "joint";
    }
    return "?";
}
inline DatasetKind parse_dataset_kind(std::string_view s) {
    if (s == "mnist") return DatasetKind::mnist;
    if (s == "blobs") return DatasetKind::blobs;
    throw std::invalid_argument("unknown dataset '" + std::string(s) + "' (mnist|blobs)");
}
inline Algorithm parse_algorithm(std::string_view s) {
    if (s == "federated") return Algorithm::federated;
    if (s == "standalone") return Algorithm::standalone;
    if (s == "joint") return Algorithm::joint;
    throw std::invalid_argument("unknown algorithm '" + std::string(s) + "' (federated|standalone|joint)");
}

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Defaults are the reference protocol scaled to a laptop: 10 nodes, 15
/// rounds of 5 epochs, lambda 0.2, alpha 0.25, SGD at 0.001 with batch 32.
struct ExperimentConfig {
    DatasetKind dataset = DatasetKind::mnist;
    std::string mnist_dir;
    Index subset = 0;  // 0 keeps every sample
    int blob_classes = 4;
    Index blob_dims = 8;
    Index blob_samples_per_class = 100;
    double blob_spread = 0.15;

    Index nodes = 10;
    int rounds = 15;
    int epochs = 5;
    double lambda = 0.2;
    double alpha = 0.25;
    Topology topology = Topology::cyclic;
    RewindMode rewind = RewindMode::source;
    PeerAssignment centralized_peer = PeerAssignment::ring;
    Algorithm algorithm = Algorithm::federated;

    Index hidden_dim = 64;
    double learning_rate = 0.001;
    Index batch_size = 32;
    double test_fraction = 0.2;
    int eval_interval = 5;
    Seed seed = 0;

    int num_tasks = 0;  // 0 disables the task stream
    int rounds_per_task = 1;
    int max_offset = 0;

    std::string output_dir = "out";
    unsigned threads = 1;

    int num_classes() const noexcept { return dataset == DatasetKind::mnist ? 10 : blob_classes; }

    /// Phase plan actually executed (rewind mode none trains E local epochs).
    PhasePlan phase_plan() const { return make_phase_plan(epochs, rewind == RewindMode::none ? 0.0 : lambda); }

    void validate() const {
        auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
        if (nodes < 1) fail("nodes must be >= 1");
        if (rounds < 0) fail("rounds must be >= 0");
        if (epochs < 1) fail("epochs must be >= 1");
        if (!(lambda >= 0.0 && lambda <= 0.5)) fail("lambda must lie in [0, 0.5] (head budget 1 - 2*lambda >= 0)");
        if (lambda > 0.0 && epochs < 3) fail("lambda > 0 requires epochs >= 3 (one epoch per phase)");
        try {
            (void)make_phase_plan(epochs, lambda);
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha must be positive");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
        if (batch_size < 1) fail("batch_size must be >= 1");
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in (0, 1)");
        if (eval_interval < 1) fail("eval_interval must be >= 1");
        if (dataset == DatasetKind::blobs) {
            if (blob_classes < 2) fail("blob_classes must be >= 2");
            if (blob_dims < 1 || blob_samples_per_class < 1) fail("blob_dims and blob_samples_per_class must be >= 1");
            if (!(blob_spread >= 0.0)) fail("blob_spread must be >= 0");
        }
        if (algorithm == Algorithm::federated && topology != Topology::star && nodes < 2)
            fail("cyclic/random topologies need nodes >= 2");
        if (algorithm == Algorithm::federated && rewind == RewindMode::random_peer && nodes < 2)
            fail("random_peer rewind needs nodes >= 2");
        if (num_tasks < 0) fail("num_tasks must be >= 0");
        if (num_tasks > 0) {
            if (num_classes() % num_tasks != 0) fail("number of classes must be divisible by num_tasks");
            if (rounds_per_task < 1) fail("rounds_per_task must be >= 1");
            if (max_offset < 0) fail("max_offset must be >= 0");
        }
        if (threads < 1) fail("threads must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// JSON (flat object, scalar fields)

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["dataset"] = to_string(c.dataset);
    j["mnist_dir"] = c.mnist_dir;
    j["subset"] = c.subset;
    j["blob_classes"] = c.blob_classes;
    j["blob_dims"] = c.blob_dims;
    j["blob_samples_per_class"] = c.blob_samples_per_class;
    j["blob_spread"] = c.blob_spread;
    j["nodes"] = c.nodes;
    j["rounds"] = c.rounds;
    j["epochs"] = c.epochs;
    j["lambda"] = c.lambda;
    j["alpha"] = c.alpha;
    j["topology"] = to_string(c.topology);
    j["rewind"] = to_string(c.rewind);
    j["centralized_peer"] = to_string(c.centralized_peer);
    j["algorithm"] = to_string(c.algorithm);
    j["hidden_dim"] = c.hidden_dim;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["test_fraction"] = c.test_fraction;
    j["eval_interval"] = c.eval_interval;
    j["seed"] = c.seed;
    j["num_tasks"] = c.num_tasks;
    j["rounds_per_task"] = c.rounds_per_task;
    j["max_offset"] = c.max_offset;
    j["output_dir"] = c.output_dir;
    j["threads"] = c.threads;
    return j;
}

/// Applies the keys present in `j` on top of `base`. Accepts either a flat
/// config object or a run.json record (its "config" member). Unknown keys and
/// type mismatches raise ConfigError. Does not validate.
inline ExperimentConfig apply_json(ExperimentConfig c, const nlohmann::json& in) {
    const nlohmann::json& j = (in.is_object() && in.contains("config") && in["config"].is_object()) ? in["config"] : in;
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "dataset") c.dataset = parse_dataset_kind(v.get<std::string>());
            else if (key == "mnist_dir") c.mnist_dir = v.get<std::string>();
            else if (key == "subset") c.subset = v.get<Index>();
            else if (key == "blob_classes") c.blob_classes = v.get<int>();
            else if (key == "blob_dims") c.blob_dims = v.get<Index>();
            else if (key == "blob_samples_per_class") c.blob_samples_per_class = v.get<Index>();
            else if (key == "blob_spread") c.blob_spread = v.get<double>();
            else if (key == "nodes") c.nodes = v.get<Index>();
            else if (key == "rounds") c.rounds = v.get<int>();
            else if (key == "epochs") c.epochs = v.get<int>();
            else if (key == "lambda") c.lambda = v.get<double>();
            else if (key == "alpha") c.alpha = v.get<double>();
            else if (key == "topology") c.topology = parse_topology(v.get<std::string>());
            else if (key == "rewind") c.rewind = parse_rewind_mode(v.get<std::string>());
            else if (key == "centralized_peer") c.centralized_peer = parse_peer_assignment(v.get<std::string>());
            else if (key == "algorithm") c.algorithm = parse_algorithm(v.get<std::string>());
            else if (key == "hidden_dim") c.hidden_dim = v.get<Index>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "batch_size") c.batch_size = v.get<Index>();
            else if (key == "test_fraction") c.test_fraction = v.get<double>();
            else if (key == "eval_interval") c.eval_interval = v.get<int>();
            else if (key == "seed") c.seed = v.get<Seed>();
            else if (key == "num_tasks") c.num_tasks = v.get<int>();
            else if (key == "rounds_per_task") c.rounds_per_task = v.get<int>();
            else if (key == "max_offset") c.max_offset = v.get<int>();
            else if (key == "output_dir") c.output_dir = v.get<std::string>();
            else if (key == "threads") c.threads = v.get<unsigned>();
            else throw ConfigError("config: unknown key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: bad value for '" + key + "': " + e.what());
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError("config: " + std::string(e.what()));
        }
    }
    return c;
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    return apply_json(std::move(base), j);
}

// ---------------------------------------------------------------------------
// Dataset loading

inline std::filesystem::path resolve_mnist_dir(const ExperimentConfig& c) {
    if (!c.mnist_dir.empty()) return c.mnist_dir;
    if (const char* env = std::getenv("FEDREWIND_MNIST_DIR"); env && *env) return env;
    throw ConfigError("MNIST directory not set (use --mnist-dir or FEDREWIND_MNIST_DIR)");
}

inline std::filesystem::path find_idx_file(const std::filesystem::path& dir, const std::string& stem) {
    for (const auto& name : {stem, stem + ".gz"})
        if (std::filesystem::exists(dir / name)) return dir / name;
    throw std::runtime_error("missing " + (dir / stem).string() + "[.gz]");
}

inline Dataset load_dataset(const ExperimentConfig& c) {
    Dataset ds;
    if (c.dataset == DatasetKind::mnist) {
        const auto dir = resolve_mnist_dir(c);
        ds = load_mnist_idx(find_idx_file(dir, "train-images-idx3-ubyte"), find_idx_file(dir, "train-labels-idx1-ubyte"));
    } else {
        ds = make_blobs(c.blob_classes, c.blob_dims, c.blob_samples_per_class, c.blob_spread, c.seed);
    }
    if (c.subset > 0) ds = head(ds, c.subset);
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Running

struct RunRecord {
    ExperimentConfig config;
    std::vector<MetricsRecord> history;  // strictly increasing rounds
    double wall_time_s = 0.0;
    std::string version = fedrewind::version;

    const MetricsRecord& final_metrics() const { return history.back(); }
};

/// Rounds at which metrics are recorded: 0, every eval_interval, and T.
inline std::vector<int> evaluation_rounds(int rounds, int eval_interval) {
    std::vector<int> r{0};
    for (int t = eval_interval; t <= rounds; t += eval_interval) r.push_back(t);
    if (rounds > 0 && r.back() != rounds) r.push_back(rounds);
    return r;
}

/// Runs the configured algorithm on `data`; a pure function of (config, data).
inline RunRecord run_experiment(const ExperimentConfig& config, const Dataset& data) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.config = config;

    const auto shards =
        dirichlet_partition(data, {config.nodes, config.alpha, config.test_fraction, config.seed});
    std::vector<TaskSchedule> schedules;
    if (config.num_tasks > 0)
        schedules = make_schedules(data.num_classes, config.num_tasks, config.nodes, config.rounds_per_task,
                                   config.max_offset, config.seed);
    const FederationData fed{data, shards, schedules};

    const ArchSpec arch{data.dims(), config.hidden_dim, data.num_classes, Activation::relu};
    const ModelParams initial = init_model(arch, config.seed);
    const RoundOptions opts{{config.learning_rate, config.batch_size, 0}, config.seed, config.threads};
    const auto eval_at = evaluation_rounds(config.rounds, config.eval_interval);
    std::size_t next_eval = 0;

    auto record = [&](int round, const FederationState& s) {
        if (next_eval >= eval_at.size() || eval_at[next_eval] != round) return;
        ++next_eval;
        MetricsRecord m = summarize(cross_accuracy(s.models, data, shards, round));
        if (s.server_model) m.global_acc = federation_accuracy(single_model_accuracy(*s.server_model, data, shards));
        rec.history.push_back(std::move(m));
    };

    if (config.algorithm == Algorithm::joint) {
        const Shard joint = joint_view(shards);
        ModelParams model = initial;
        for (int t = 0; t <= config.rounds; ++t) {
            if (t > 0) model = run_round_joint(model, data, joint, t, config.epochs, opts);
            if (next_eval < eval_at.size() && eval_at[next_eval] == t) {
                ++next_eval;
                rec.history.push_back(summarize(single_model_accuracy(model, data, shards, t)));
            }
        }
    } else {
        const bool star = config.algorithm == Algorithm::federated && config.topology == Topology::star;
        FederationState state = init_federation(initial, config.nodes, star ? Topology::star : Topology::cyclic);
        const PhasePlan phase = config.phase_plan();
        const RewindMode mode = phase.rewind == 0 ? RewindMode::none : config.rewind;
        record(0, state);
        for (int t = 1; t <= config.rounds; ++t) {
            if (config.algorithm == Algorithm::standalone) {
                state = run_round_standalone(state, fed, config.epochs, opts);
            } else if (star) {
                state = run_round_centralized(state, fed, phase, mode, config.centralized_peer, opts);
            } else {
                const auto plan = build_routing(config.topology, config.nodes, t, config.seed);
                state = run_round_decentralized(state, fed, plan, phase, mode, opts);
            }
            record(t, state);
        }
    }
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return rec;
}

// ---------------------------------------------------------------------------
// Output files

inline std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string metrics_csv(const RunRecord& rec) {
    std::ostringstream out;
    out << "round,FA,FF,PFA";
    if (!rec.history.empty()) {
        const auto& acc = rec.history.front().matrix.acc;
        for (Eigen::Index i = 0; i < acc.rows(); ++i)
            for (Eigen::Index j = 0; j < acc.cols(); ++j) out << ",acc_" << i << '_' << j;
    }
    out << '\n';
    for (const auto& m : rec.history) {
        out << m.round << ',' << format_number(m.fa) << ',' << format_number(m.ff) << ',' << format_number(m.pfa);
        for (Eigen::Index i = 0; i < m.matrix.acc.rows(); ++i)
            for (Eigen::Index j = 0; j < m.matrix.acc.cols(); ++j) out << ',' << format_number(m.matrix.acc(i, j));
        out << '\n';
    }
    return out.str();
}

inline nlohmann::ordered_json metrics_json(const MetricsRecord& m) {
    nlohmann::ordered_json j;
    j["round"] = m.round;
    j["FA"] = m.fa;
    j["FF"] = std::isnan(m.ff) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(m.ff);
    j["PFA"] = m.pfa;
    j["per_node_acc"] = m.per_node_acc;
    if (m.global_acc) j["global_acc"] = *m.global_acc;
    return j;
}

inline nlohmann::ordered_json run_json(const RunRecord& rec) {
    nlohmann::ordered_json j;
    j["config"] = to_json(rec.config);
    j["final"] = metrics_json(rec.final_metrics());
    auto& hist = j["history"] = nlohmann::ordered_json::array();
    for (const auto& m : rec.history) hist.push_back(metrics_json(m));
    j["wall_time_s"] = rec.wall_time_s;
    j["version"] = rec.version;
    nlohmann::ordered_json env;
#if defined(__clang__)
    env["compiler"] = "clang " __clang_version__;
#elif defined(__GNUC__)
    env["compiler"] = "gcc " __VERSION__;
#else
    env["compiler"] = "unknown";
#endif
    env["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                   std::to_string(EIGEN_MINOR_VERSION);
    env["cplusplus"] = static_cast<long>(__cplusplus);
    j["environment"] = env;
    return j;
}

/// Writes via a temporary file and rename so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << contents;
        if (!out.flush()) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_run_outputs(const RunRecord& rec, const std::filesystem::path& dir) {
    write_file_atomic(dir / "metrics.csv", metrics_csv(rec));
    write_file_atomic(dir / "run.json", run_json(rec).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Heterogeneity sweep

enum class SweepVariants { both, off, on };

struct SweepRow {
    double alpha = 0.0;
    bool rewind = false;
    double final_fa = 0.0;
};

/// One run per (alpha, rewind off/on) sharing the base seed. "Off" is rewind
/// mode none; "on" keeps the config's mode, or source if it is none.
inline std::vector<SweepRow> sweep_alpha(const ExperimentConfig& base, const Dataset& data,
                                         std::span<const double> alphas, SweepVariants variants = SweepVariants::both) {
    if (alphas.empty()) throw ConfigError("sweep_alpha: empty alpha list");
    std::vector<SweepRow> rows;
    for (double a : alphas) {
        for (bool on : {false, true}) {
            if ((on && variants == SweepVariants::off) || (!on && variants == SweepVariants::on)) continue;
            ExperimentConfig c = base;
            c.alpha = a;
            if (!on) c.rewind = RewindMode::none;
            else if (c.rewind == RewindMode::none) c.rewind = RewindMode::source;
            rows.push_back({a, on, run_experiment(c, data).final_metrics().fa});
        }
    }
    return rows;
}

inline std::string sweep_csv(std::span<const SweepRow> rows) {
    std::ostringstream out;
    out << "alpha,rewind,final_FA\n";
    for (const auto& r : rows) out << format_number(r.alpha) << ',' << (r.rewind ? "on" : "off") << ',' << format_number(r.final_fa) << '\n';
    return out.str();
}

}  // namespace fedrewind
