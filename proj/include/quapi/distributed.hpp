#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "quapi/engine.hpp"

namespace quapi {

// ---------------------------------------------------------------------------
// Transport

/// Point-to-point byte messages between ranks 0..size-1. Messages between a
/// fixed pair of ranks arrive in send order.
class Transport {
public:
    virtual ~Transport() = default;
    virtual int rank() const = 0;
    virtual int size() const = 0;
    virtual void send(int dst, std::vector<std::uint8_t> bytes) = 0;
    virtual std::vector<std::uint8_t> receive(int src) = 0;

    /// Protocol phase, reported in transport errors.
    void set_phase(std::string phase) { phase_ = std::move(phase); }
    const std::string& phase() const { return phase_; }

protected:
    [[noreturn]] void fail(const std::string& what) const;

private:
    std::string phase_ = "idle";
};

/// In-process mailboxes shared by a fixed set of thread workers.
class ThreadHub {
public:
    explicit ThreadHub(int n);
    ~ThreadHub();
    std::unique_ptr<Transport> endpoint(int rank);

    struct State;

private:
    std::shared_ptr<State> state_;
};

// ---------------------------------------------------------------------------
// Wire format

/// Little-endian, length-prefixed batch of (key, fwd, bwd, weight, sum).
std::vector<std::uint8_t> serialize(const OmegaStore& store);
std::vector<std::uint8_t> serialize(std::span<const Configuration> items,
                                    std::span<const PathKey> keys);

struct MergeEntry {
    PathKey key;
    Configuration cfg;
};
std::vector<MergeEntry> deserialize(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Protocol pieces

struct Route {
    int from = 0;
    int to = 0;
    std::uint64_t count = 0;
    bool operator==(const Route&) const = default;
};
using RouteMap = std::vector<Route>;

/// Greedy surplus/deficit pairing towards total/n (+1 for the first
/// total % n ranks).
RouteMap plan_routes(std::span<const std::uint64_t> counts);

/// Contiguous chunks of the key-sorted store, sizes differing by at most 1.
std::vector<OmegaStore> partition(const OmegaStore& store, int n, const Mask& key_mask);

/// Makes every masked key live on exactly one worker (the lowest rank that
/// held it) with the global representative and the global sum. The local
/// store must be associative, keyed by `mask`.
void inter_worker_merge(Transport& tr, OmegaStore& local, const Mask& mask,
                        Execution exec = {});

/// Moves configurations along plan_routes(all counts). Returns the route map
/// every rank agreed on.
RouteMap balance_load(Transport& tr, OmegaStore& local);

/// Sum of the partial matrices at rank 0 (other ranks get their own back).
CMatrix reduce_density(Transport& tr, const CMatrix& partial);

/// Global maximum of a local value, known to every rank afterwards.
double allreduce_max(Transport& tr, double value);

/// Gathers a small value from every rank; returned in rank order at rank 0.
std::vector<std::uint64_t> gather_counts(Transport& tr, std::uint64_t value);

// ---------------------------------------------------------------------------
// Runs

enum class Backend { Thread, Process };
Backend parse_backend(const std::string& s);

struct DistributedOptions {
    int workers = 1;
    Backend backend = Backend::Thread;
    /// Gather every key to rank 0 after each merge and fail if one is held by
    /// two workers (tests).
    bool check_uniqueness = false;
};

struct DistributedTelemetry {
    /// Per step, per worker configuration counts right after load balancing.
    std::vector<std::vector<std::uint64_t>> balanced_counts;
    /// Number of steps at which the global key scan ran and passed.
    int uniqueness_checks = 0;
};

/// Premerge-mode propagation spread over `workers` ranks.
Trajectory run_distributed(const RunSpec& spec, const DistributedOptions& opts,
                           DistributedTelemetry* telemetry = nullptr);

}  // namespace quapi
