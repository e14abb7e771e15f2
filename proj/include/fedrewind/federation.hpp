#pragma once

// Round engine for decentralized (peer routing) and centralized (star/FedAvg)
// federated learning with the rewind schedule: each node spends the head of
// its epoch budget on its own data, hands the model back to a peer for a short
// rewind phase on that peer's data, then finishes on its own data.

#include "fedrewind/dataset.hpp"
#include "fedrewind/nn.hpp"
#include "fedrewind/random.hpp"
#include "fedrewind/task_stream.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace fedrewind {

enum class Topology { cyclic, random, star };
enum class RewindMode { none, source, random_peer };
/// Which peer a node rewinds on in the centralized setting, where models
/// arrive from the server rather than from a source node.
enum class PeerAssignment { ring, random };

inline std::string_view to_string(Topology t) {
    switch (t) {
        case Topology::cyclic: return "cyclic";
        case Topology::random: return "random";
        case Topology::star: return "star";
    }
    return "?";
}
inline std::string_view to_string(RewindMode m) {
    switch (m) {
        case RewindMode::none: return "none";
        case RewindMode::source: return "source";
        case RewindMode::random_peer: return "random_peer";
    }
    return "?";
}
inline std::string_view to_string(PeerAssignment p) { return p == PeerAssignment::ring ? "ring" : "random"; }

inline Topology parse_topology(std::string_view s) {
    if (s == "cyclic") return Topology::cyclic;
    if (s == "random") return Topology::random;
    if (s == "star") return Topology::star;
    throw std::invalid_argument("unknown topology '" + std::string(s) + "' (cyclic|random|star)");
}
inline RewindMode parse_rewind_mode(std::string_view s) {
    if (s == "none") return RewindMode::none;
    if (s == "source") return RewindMode::source;
    if (s == "random_peer") return RewindMode::random_peer;
    throw std::invalid_argument("unknown rewind mode '" + std::string(s) + "' (none|source|random_peer)");
}
inline PeerAssignment parse_peer_assignment(std::string_view s) {
    if (s == "ring") return PeerAssignment::ring;
    if (s == "random") return PeerAssignment::random;
    throw std::invalid_argument("unknown centralized peer assignment '" + std::string(s) + "' (ring|random)");
}

// ---------------------------------------------------------------------------
// Phase plan

/// Epoch split of one round: head on own data, rewind on a peer's data, tail
/// on own data, executed in that order.
struct PhasePlan {
    int head = 0;
    int rewind = 0;
    int tail = 0;

    int total() const noexcept { return head + rewind + tail; }
    friend bool operator==(const PhasePlan&, const PhasePlan&) = default;
};

/// rewind = tail = max(1, round(lambda * E)) for lambda > 0, else 0.
inline PhasePlan make_phase_plan(int epochs, double lambda) {
    if (epochs < 1) throw std::invalid_argument("make_phase_plan: E must be >= 1");
    if (!(lambda >= 0.0 && lambda <= 0.5))
        throw std::invalid_argument("make_phase_plan: lambda must lie in [0, 0.5] (head budget 1 - 2*lambda >= 0)");
    if (lambda == 0.0) return {epochs, 0, 0};
    if (epochs < 3)
        throw std::invalid_argument("make_phase_plan: lambda > 0 needs E >= 3 so each phase gets an epoch (E = " +
                                    std::to_string(epochs) + ")");
    const int side = std::max(1, static_cast<int>(std::lround(lambda * epochs)));
    const int head = epochs - 2 * side;
    if (head < 1)
        throw std::invalid_argument("make_phase_plan: lambda = " + std::to_string(lambda) + " with E = " +
                                    std::to_string(epochs) + " leaves no head epoch");
    return {head, side, side};
}

// ---------------------------------------------------------------------------
// Routing

/// dest[j]: node that receives node j's model; src = inverse of dest.
/// Empty for star, where models travel through the server.
struct RoutingPlan {
    int round = 0;
    std::vector<Index> dest;
    std::vector<Index> src;
};

/// Cyclic: fixed ring j -> j+1. Random: a fresh uniform permutation per round
/// (self-loops allowed), deterministic in (seed, round).
inline RoutingPlan build_routing(Topology kind, Index num_nodes, int round, Seed seed) {
    RoutingPlan plan{round, {}, {}};
    if (kind == Topology::star) return plan;
    if (num_nodes < 2) throw std::invalid_argument("build_routing: peer topologies need N >= 2");
    plan.dest.resize(num_nodes);
    std::iota(plan.dest.begin(), plan.dest.end(), Index{0});
    if (kind == Topology::cyclic) {
        for (Index j = 0; j < num_nodes; ++j) plan.dest[j] = (j + 1) % num_nodes;
    } else {
        auto rng = make_rng(seed, {stream::routing, static_cast<std::uint64_t>(round)});
        std::shuffle(plan.dest.begin(), plan.dest.end(), rng);
    }
    plan.src.resize(num_nodes);
    for (Index j = 0; j < num_nodes; ++j) plan.src[plan.dest[j]] = j;
    return plan;
}

inline bool is_bijection(std::span<const Index> map) {
    std::vector<bool> hit(map.size(), false);
    for (Index v : map) {
        if (v >= map.size() || hit[v]) return false;
        hit[v] = true;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Federation data and state

/// Read-only view of every node's data. With task schedules present, the
/// training data of a node is its active task's slice of the shard.
struct FederationData {
    const Dataset& data;
    std::span<const Shard> shards;
    std::span<const TaskSchedule> schedules = {};

    Index size() const noexcept { return shards.size(); }

    /// Training indices of `node` during zero-based round `round`.
    IndexList train_view(Index node, int round) const {
        if (node >= shards.size()) throw std::invalid_argument("missing shard for node " + std::to_string(node));
        if (schedules.empty()) return shards[node].train;
        return active_view(schedules[node], data, shards[node], round).train;
    }
};

struct FederationState {
    int round = 0;
    std::vector<ModelParams> models;           // model held/trained by node j
    std::optional<ModelParams> server_model;   // star topology only
};

inline FederationState init_federation(const ModelParams& initial, Index num_nodes, Topology kind) {
    FederationState s;
    s.models.assign(num_nodes, initial);
    if (kind == Topology::star) s.server_model = initial;
    return s;
}

struct RoundOptions {
    TrainConfig train;  // shuffle_seed is ignored; phases derive their own
    Seed seed = 0;
    unsigned threads = 1;
};

/// Shuffle key for node `node`'s first epoch of round `round` (1-based).
/// Consecutive rounds continue the epoch counter, so a node that trains on the
/// same data every round follows one uninterrupted train() trajectory.
inline Seed node_shuffle_seed(Seed seed, Index node, int round, int epochs_per_round) {
    return derive_seed(seed, {stream::shuffle, node}) +
           static_cast<Seed>(round - 1) * static_cast<Seed>(epochs_per_round);
}

// ---------------------------------------------------------------------------
// Instrumentation

enum class PhaseKind { head, rewind, tail, local };

struct PhaseRecord {
    Index node = 0;   // node whose budget is spent
    PhaseKind kind = PhaseKind::local;
    Index shard = 0;  // shard whose data was read
    int epochs = 0;
    std::size_t steps = 0;
};

struct RoundTrace {
    std::vector<PhaseRecord> phases;

    std::vector<int> epochs_per_node(Index num_nodes) const {
        std::vector<int> e(num_nodes, 0);
        for (const auto& p : phases) e[p.node] += p.epochs;
        return e;
    }
    std::vector<std::size_t> steps_per_node(Index num_nodes) const {
        std::vector<std::size_t> s(num_nodes, 0);
        for (const auto& p : phases) s[p.node] += p.steps;
        return s;
    }
    std::optional<Index> rewind_shard(Index node) const {
        for (const auto& p : phases)
            if (p.node == node && p.kind == PhaseKind::rewind) return p.shard;
        return std::nullopt;
    }
};

namespace detail {

template <typename Fn>
void for_each_node(Index n, unsigned threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (Index j = 0; j < n; ++j) fn(j);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::jthread> pool;
    const Index workers = std::min<Index>(threads, n);
    for (Index w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (Index j = w; j < n; j += workers) {
                try {
                    fn(j);
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct PhaseRun {
    Index node;
    PhaseKind kind;
    Index shard;
    int epochs;
};

/// Trains `epochs` on `shard`'s current view. An empty view (task streams
/// where the node holds no sample of the active classes) leaves the model
/// unchanged.
inline ModelParams run_phase(const FederationData& fed, const ModelParams& model, const PhaseRun& p, int round,
                             const TrainConfig& cfg, std::vector<PhaseRecord>& log) {
    if (p.epochs == 0) return model;
    const IndexList view = fed.train_view(p.shard, round - 1);
    TrainStats stats;
    ModelParams out = view.empty() ? model : train(model, fed.data, view, p.epochs, cfg, &stats);
    log.push_back({p.node, p.kind, p.shard, static_cast<int>(stats.epochs), stats.steps});
    return out;
}

}  // namespace detail

/// Rewind request served by `peer`: the visiting model trains `epochs` on the
/// peer's current data and is returned to the requester. Shards are immutable,
/// so concurrent requests need no locking.
inline ModelParams serve_rewind(const FederationData& fed, Index requester, Index peer, const ModelParams& visiting,
                                int epochs, int round, const TrainConfig& cfg, std::vector<PhaseRecord>& log) {
    return detail::run_phase(fed, visiting, {requester, PhaseKind::rewind, peer, epochs}, round, cfg, log);
}

/// One node's round: head on own data, rewind at `peer` (if any), tail on own
/// data. Shuffle keys advance across the three phases as one epoch counter.
inline ModelParams train_node_round(const FederationData& fed, Index node, const ModelParams& incoming,
                                    std::optional<Index> peer, const PhasePlan& phase, int round,
                                    const RoundOptions& opts, std::vector<PhaseRecord>& log) {
    TrainConfig cfg = opts.train;
    cfg.shuffle_seed = node_shuffle_seed(opts.seed, node, round, phase.total());
    ModelParams m = detail::run_phase(fed, incoming, {node, PhaseKind::head, node, phase.head}, round, cfg, log);
    cfg.shuffle_seed += static_cast<Seed>(phase.head);
    if (phase.rewind > 0) {
        if (!peer) throw std::logic_error("train_node_round: rewind phase without a peer");
        m = serve_rewind(fed, node, *peer, m, phase.rewind, round, cfg, log);
    }
    cfg.shuffle_seed += static_cast<Seed>(phase.rewind);
    return detail::run_phase(fed, m, {node, PhaseKind::tail, node, phase.tail}, round, cfg, log);
}

namespace detail {

inline void check_mode_phase(RewindMode mode, const PhasePlan& phase) {
    if ((mode == RewindMode::none) != (phase.rewind == 0))
        throw std::invalid_argument("phase/routing inconsistency: rewind mode '" + std::string(to_string(mode)) +
                                    "' with " + std::to_string(phase.rewind) + " rewind epochs");
}

inline Index random_other_node(Seed seed, int round, Index node, Index num_nodes) {
    if (num_nodes < 2) throw std::invalid_argument("random_peer rewind needs N >= 2");
    auto rng = make_rng(seed, {stream::peer, static_cast<std::uint64_t>(round), node});
    std::uniform_int_distribution<Index> pick(0, num_nodes - 2);
    const Index r = pick(rng);
    return r >= node ? r + 1 : r;
}

template <typename PeerFn, typename IncomingFn>
std::vector<ModelParams> train_all_nodes(const FederationData& fed, int round, const PhasePlan& phase,
                                         const RoundOptions& opts, PeerFn&& peer_of, IncomingFn&& incoming_of,
                                         RoundTrace* trace) {
    const Index n = fed.size();
    std::vector<ModelParams> out(n);
    std::vector<std::vector<PhaseRecord>> logs(n);
    for_each_node(n, opts.threads, [&](Index j) {
        out[j] = train_node_round(fed, j, incoming_of(j), peer_of(j), phase, round, opts, logs[j]);
    });
    if (trace)
        for (auto& l : logs) trace->phases.insert(trace->phases.end(), l.begin(), l.end());
    return out;
}

}  // namespace detail

/// Node j receives the model trained by src[j] last round, trains it with the
/// phase plan (rewinding on src[j] for mode source, on a uniformly drawn other
/// node for random_peer), and keeps the result until the next delivery.
inline FederationState run_round_decentralized(const FederationState& state, const FederationData& fed,
                                               const RoutingPlan& plan, const PhasePlan& phase, RewindMode mode,
                                               const RoundOptions& opts, RoundTrace* trace = nullptr) {
    const Index n = fed.size();
    if (state.models.size() != n)
        throw std::invalid_argument("run_round_decentralized: " + std::to_string(state.models.size()) +
                                    " models for " + std::to_string(n) + " shards");
    if (plan.dest.size() != n || plan.src.size() != n || !is_bijection(plan.dest))
        throw std::invalid_argument("run_round_decentralized: routing plan is not a bijection over the nodes");
    for (Index j = 0; j < n; ++j)
        if (plan.dest[plan.src[j]] != j) throw std::invalid_argument("run_round_decentralized: src is not dest^-1");
    detail::check_mode_phase(mode, phase);

    const int round = state.round + 1;
    auto peer_of = [&](Index j) -> std::optional<Index> {
        switch (mode) {
            case RewindMode::none: return std::nullopt;
            case RewindMode::source: return plan.src[j];
            case RewindMode::random_peer: return detail::random_other_node(opts.seed, round, j, n);
        }
        return std::nullopt;
    };
    auto incoming_of = [&](Index j) -> const ModelParams& { return state.models[plan.src[j]]; };

    FederationState next;
    next.round = round;
    next.models = detail::train_all_nodes(fed, round, phase, opts, peer_of, incoming_of, trace);
    return next;
}

/// Rewind peers for a centralized round: ring predecessor, or a seeded
/// per-round permutation.
inline std::vector<Index> centralized_peers(PeerAssignment assign, Index num_nodes, int round, Seed seed) {
    std::vector<Index> peer(num_nodes);
    if (assign == PeerAssignment::ring) {
        for (Index j = 0; j < num_nodes; ++j) peer[j] = (j + num_nodes - 1) % num_nodes;
    } else {
        std::iota(peer.begin(), peer.end(), Index{0});
        auto rng = make_rng(seed, {stream::peer, static_cast<std::uint64_t>(round), 0xc0ffeeULL});
        std::shuffle(peer.begin(), peer.end(), rng);
    }
    return peer;
}

/// Every node trains the server model with the phase plan; the server then
/// averages the node results. `state.models` holds the node results, which
/// are what cross-evaluation sees.
inline FederationState run_round_centralized(const FederationState& state, const FederationData& fed,
                                             const PhasePlan& phase, RewindMode mode, PeerAssignment assign,
                                             const RoundOptions& opts, RoundTrace* trace = nullptr) {
    if (!state.server_model) throw std::invalid_argument("run_round_centralized: missing server model");
    detail::check_mode_phase(mode, phase);
    const Index n = fed.size();
    const int round = state.round + 1;
    const auto ring_or_perm = centralized_peers(assign, n, round, opts.seed);
    auto peer_of = [&](Index j) -> std::optional<Index> {
        switch (mode) {
            case RewindMode::none: return std::nullopt;
            case RewindMode::source: return ring_or_perm[j];
            case RewindMode::random_peer: return detail::random_other_node(opts.seed, round, j, n);
        }
        return std::nullopt;
    };
    auto incoming_of = [&](Index) -> const ModelParams& { return *state.server_model; };

    FederationState next;
    next.round = round;
    next.models = detail::train_all_nodes(fed, round, phase, opts, peer_of, incoming_of, trace);
    next.server_model = average_params(next.models);
    return next;
}

// ---------------------------------------------------------------------------
// Baselines

/// One round of isolated training: every node trains E epochs on its own data.
inline FederationState run_round_standalone(const FederationState& state, const FederationData& fed, int epochs,
                                            const RoundOptions& opts, RoundTrace* trace = nullptr) {
    const Index n = fed.size();
    if (state.models.size() != n) throw std::invalid_argument("run_round_standalone: model/shard count mismatch");
    const int round = state.round + 1;
    const PhasePlan plan{epochs, 0, 0};
    auto incoming_of = [&](Index j) -> const ModelParams& { return state.models[j]; };
    auto no_peer = [](Index) -> std::optional<Index> { return std::nullopt; };
    FederationState next;
    next.round = round;
    next.models = detail::train_all_nodes(fed, round, plan, opts, no_peer, incoming_of, trace);
    return next;
}

inline std::vector<ModelParams> run_standalone(const FederationData& fed, const ModelParams& initial, int rounds,
                                               int epochs, const RoundOptions& opts) {
    FederationState s = init_federation(initial, fed.size(), Topology::cyclic);
    for (int t = 0; t < rounds; ++t) s = run_round_standalone(s, fed, epochs, opts);
    return s.models;
}

/// One round of consolidated training (E epochs over the joint train set).
/// Uses node 0's shuffle keys, so it coincides with standalone when N = 1.
inline ModelParams run_round_joint(const ModelParams& model, const Dataset& data, const Shard& joint, int round,
                                   int epochs, const RoundOptions& opts, TrainStats* stats = nullptr) {
    TrainConfig cfg = opts.train;
    cfg.shuffle_seed = node_shuffle_seed(opts.seed, 0, round, epochs);
    return train(model, data, joint.train, epochs, cfg, stats);
}

inline ModelParams run_joint(const Dataset& data, const Shard& joint, const ModelParams& initial, int rounds,
                             int epochs, const RoundOptions& opts) {
    TrainConfig cfg = opts.train;
    cfg.shuffle_seed = node_shuffle_seed(opts.seed, 0, 1, epochs);
    return train(initial, data, joint.train, rounds * epochs, cfg);
}

}  // namespace fedrewind
