// fedrewind: run one federated experiment or an alpha sweep and write
// metrics.csv / run.json / sweep.csv into --out.

#include "fedrewind/fedrewind.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

std::vector<double> parse_alpha_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw fedrewind::ConfigError("--sweep-alpha: bad number '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw fedrewind::ConfigError("--sweep-alpha: empty list");
    return out;
}

template <typename T>
void set_if(std::optional<T>& flag, T& field) {
    if (flag) field = *flag;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace fedrewind;
    CLI::App app{"Federated learning simulator with rewind model exchange"};

    std::string config_path, topology, rewind, dataset, algorithm, centralized_peer, sweep, sweep_rewind = "both";
    std::optional<Seed> seed;
    std::optional<Index> nodes, subset, hidden, batch_size;
    std::optional<int> rounds, epochs, eval_interval, num_tasks, rounds_per_task, max_offset;
    std::optional<double> lambda, alpha, lr, test_fraction;
    std::optional<std::string> mnist_dir, out_dir;
    std::optional<unsigned> threads;

    app.add_option("--config", config_path, "JSON config file (a previous run.json also works)");
    app.add_option("--seed", seed, "Global seed");
    app.add_option("--nodes", nodes, "Number of federation nodes N");
    app.add_option("--rounds", rounds, "Communication rounds T");
    app.add_option("--epochs", epochs, "Local epochs per round E");
    app.add_option("--lambda", lambda, "Rewind budget fraction, in [0, 0.5]");
    app.add_option("--alpha", alpha, "Dirichlet concentration alpha_dir");
    app.add_option("--topology", topology, "cyclic | random | star");
    app.add_option("--rewind", rewind, "none | source | random_peer");
    app.add_option("--centralized-peer", centralized_peer, "Rewind peer under star: ring | random");
    app.add_option("--algorithm", algorithm, "federated | standalone | joint");
    app.add_option("--dataset", dataset, "mnist | blobs");
    app.add_option("--mnist-dir", mnist_dir, "Directory with train-{images-idx3,labels-idx1}-ubyte[.gz]");
    app.add_option("--subset", subset, "Use only the first K samples");
    app.add_option("--hidden", hidden, "Hidden units (0 = softmax regression)");
    app.add_option("--lr", lr, "SGD learning rate");
    app.add_option("--batch-size", batch_size, "SGD mini-batch size");
    app.add_option("--test-fraction", test_fraction, "Per-node test split");
    app.add_option("--eval-interval", eval_interval, "Evaluate every k rounds");
    app.add_option("--tasks", num_tasks, "Class-incremental tasks per node (0 = static data)");
    app.add_option("--rounds-per-task", rounds_per_task, "Rounds spent on each task");
    app.add_option("--max-offset", max_offset, "Maximum per-node task start offset (rounds)");
    app.add_option("--threads", threads, "Worker threads for node training");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--sweep-alpha", sweep, "Comma-separated alphas; writes sweep.csv");
    app.add_option("--sweep-rewind", sweep_rewind, "Sweep variants: both | off | on")
        ->check(CLI::IsMember({"both", "off", "on"}));

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
        set_if(seed, cfg.seed);
        set_if(nodes, cfg.nodes);
        set_if(rounds, cfg.rounds);
        set_if(epochs, cfg.epochs);
        set_if(lambda, cfg.lambda);
        set_if(alpha, cfg.alpha);
        set_if(subset, cfg.subset);
        set_if(hidden, cfg.hidden_dim);
        set_if(lr, cfg.learning_rate);
        set_if(batch_size, cfg.batch_size);
        set_if(test_fraction, cfg.test_fraction);
        set_if(eval_interval, cfg.eval_interval);
        set_if(num_tasks, cfg.num_tasks);
        set_if(rounds_per_task, cfg.rounds_per_task);
        set_if(max_offset, cfg.max_offset);
        set_if(threads, cfg.threads);
        set_if(mnist_dir, cfg.mnist_dir);
        set_if(out_dir, cfg.output_dir);
        if (!topology.empty()) cfg.topology = parse_topology(topology);
        if (!rewind.empty()) cfg.rewind = parse_rewind_mode(rewind);
        if (!centralized_peer.empty()) cfg.centralized_peer = parse_peer_assignment(centralized_peer);
        if (!algorithm.empty()) cfg.algorithm = parse_algorithm(algorithm);
        if (!dataset.empty()) cfg.dataset = parse_dataset_kind(dataset);
        cfg.validate();

        const Dataset data = load_dataset(cfg);
        if (!sweep.empty()) {
            const auto alphas = parse_alpha_list(sweep);
            const auto variants = sweep_rewind == "off" ? SweepVariants::off
                                  : sweep_rewind == "on" ? SweepVariants::on
                                                         : SweepVariants::both;
            const auto rows = sweep_alpha(cfg, data, alphas, variants);
            write_file_atomic(std::filesystem::path(cfg.output_dir) / "sweep.csv", sweep_csv(rows));
            for (const auto& r : rows)
                std::cout << "alpha=" << r.alpha << " rewind=" << (r.rewind ? "on" : "off") << " FA=" << r.final_fa << '\n';
            return 0;
        }

        const RunRecord rec = run_experiment(cfg, data);
        write_run_outputs(rec, cfg.output_dir);
        const auto& f = rec.final_metrics();
        std::cout << "round " << f.round << ": FA=" << f.fa << " FF=" << format_number(f.ff) << " PFA=" << f.pfa
                  << " (" << rec.wall_time_s << " s) -> " << cfg.output_dir << '\n';
    } catch (const std::exception& e) {
        std::cerr << "fedrewind: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
