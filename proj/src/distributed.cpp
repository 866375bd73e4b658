#include "quapi/distributed.hpp"

#include <algorithm>
#include <bit>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>
#include <cerrno>
#include <csignal>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

namespace quapi {

void Transport::fail(const std::string& what) const {
    throw TransportError("rank " + std::to_string(rank()) + " (" + phase_ + "): " + what);
}

// ---------------------------------------------------------------------------
// Threads

struct ThreadHub::State {
    explicit State(int n) : n(n), boxes(std::size_t(n) * std::size_t(n)) {}
    int n;
    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::deque<std::vector<std::uint8_t>>> boxes;  // [src * n + dst]
    bool aborted = false;
    std::string abort_reason;
};

namespace {

class ThreadTransport final : public Transport {
public:
    ThreadTransport(std::shared_ptr<ThreadHub::State> s, int rank) : s_(std::move(s)), rank_(rank) {}
    int rank() const override { return rank_; }
    int size() const override { return s_->n; }

    void send(int dst, std::vector<std::uint8_t> bytes) override {
        check_peer(dst);
        {
            std::lock_guard lock(s_->mu);
            if (s_->aborted) fail("aborted: " + s_->abort_reason);
            s_->boxes[std::size_t(rank_ * s_->n + dst)].push_back(std::move(bytes));
        }
        s_->cv.notify_all();
    }

    std::vector<std::uint8_t> receive(int src) override {
        check_peer(src);
        std::unique_lock lock(s_->mu);
        auto& box = s_->boxes[std::size_t(src * s_->n + rank_)];
        s_->cv.wait(lock, [&] { return !box.empty() || s_->aborted; });
        if (box.empty()) fail("aborted while waiting for rank " + std::to_string(src) + ": " +
                              s_->abort_reason);
        auto msg = std::move(box.front());
        box.pop_front();
        return msg;
    }

    void abort(const std::string& why) {
        {
            std::lock_guard lock(s_->mu);
            if (!s_->aborted) s_->abort_reason = why;
            s_->aborted = true;
        }
        s_->cv.notify_all();
    }

private:
    void check_peer(int peer) const {
        if (peer < 0 || peer >= s_->n || peer == rank_) fail("invalid peer " + std::to_string(peer));
    }
    std::shared_ptr<ThreadHub::State> s_;
    int rank_;
};

// ---------------------------------------------------------------------------
// Processes: one socketpair per pair of ranks, frames prefixed by a u64 size.

class ProcessTransport final : public Transport {
public:
    ProcessTransport(int rank, int n, std::vector<int> fds) : rank_(rank), n_(n), fds_(std::move(fds)) {}
    ~ProcessTransport() override {
        for (int fd : fds_)
            if (fd >= 0) ::close(fd);
    }
    int rank() const override { return rank_; }
    int size() const override { return n_; }

    void send(int dst, std::vector<std::uint8_t> bytes) override {
        const int fd = peer_fd(dst);
        std::uint8_t header[8];
        const std::uint64_t len = bytes.size();
        for (int k = 0; k < 8; ++k) header[k] = std::uint8_t(len >> (8 * k));
        write_all(fd, header, 8, dst);
        write_all(fd, bytes.data(), bytes.size(), dst);
    }

    std::vector<std::uint8_t> receive(int src) override {
        const int fd = peer_fd(src);
        std::uint8_t header[8];
        read_all(fd, header, 8, src);
        std::uint64_t len = 0;
        for (int k = 0; k < 8; ++k) len |= std::uint64_t(header[k]) << (8 * k);
        std::vector<std::uint8_t> bytes(len);
        read_all(fd, bytes.data(), len, src);
        return bytes;
    }

private:
    int peer_fd(int peer) const {
        if (peer < 0 || peer >= n_ || peer == rank_) fail("invalid peer " + std::to_string(peer));
        return fds_[std::size_t(peer)];
    }
    void write_all(int fd, const std::uint8_t* p, std::size_t n, int peer) const {
        while (n > 0) {
            const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
            if (w < 0 && errno == EINTR) continue;
            if (w <= 0)
                fail("send to rank " + std::to_string(peer) + " failed: " + std::strerror(errno));
            p += w;
            n -= std::size_t(w);
        }
    }
    void read_all(int fd, std::uint8_t* p, std::size_t n, int peer) const {
        while (n > 0) {
            const ssize_t r = ::read(fd, p, n);
            if (r < 0 && errno == EINTR) continue;
            if (r == 0) fail("rank " + std::to_string(peer) + " closed the connection");
            if (r < 0)
                fail("receive from rank " + std::to_string(peer) + " failed: " + std::strerror(errno));
            p += r;
            n -= std::size_t(r);
        }
    }
    int rank_;
    int n_;
    std::vector<int> fds_;
};

// Little-endian writer/reader for messages.
class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) {
        u8(std::uint8_t(v));
        u8(std::uint8_t(v >> 8));
    }
    void u64(std::uint64_t v) {
        for (int k = 0; k < 8; ++k) u8(std::uint8_t(v >> (8 * k)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
    std::vector<std::uint8_t> take() { return std::move(buf_); }
    void reserve(std::size_t n) { buf_.reserve(n); }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint16_t u16() {
        const std::uint16_t lo = u8();
        return std::uint16_t(lo | (std::uint16_t(u8()) << 8));
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= std::uint64_t(u8()) << (8 * k);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > b_.size()) throw TransportError("malformed message: truncated");
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> pack_matrix(const CMatrix& m) {
    Writer w;
    w.u64(std::uint64_t(m.rows()));
    w.u64(std::uint64_t(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            w.f64(m(i, j).real());
            w.f64(m(i, j).imag());
        }
    return w.take();
}

CMatrix unpack_matrix(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto rows = Eigen::Index(r.u64());
    const auto cols = Eigen::Index(r.u64());
    CMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double re = r.f64();
            m(i, j) = Complex(re, r.f64());
        }
    return m;
}

std::vector<std::uint8_t> pack_u64(std::uint64_t v) {
    Writer w;
    w.u64(v);
    return w.take();
}

std::uint64_t unpack_u64(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    return r.u64();
}

std::vector<std::uint64_t> allgather_counts(Transport& tr, std::uint64_t value) {
    auto counts = gather_counts(tr, value);
    const int n = tr.size();
    if (tr.rank() == 0) {
        Writer w;
        for (auto c : counts) w.u64(c);
        const auto bytes = w.take();
        for (int d = 1; d < n; ++d) tr.send(d, bytes);
    } else {
        const auto bytes = tr.receive(0);
        Reader r(bytes);
        counts.resize(std::size_t(n));
        for (auto& c : counts) c = r.u64();
    }
    return counts;
}

}  // namespace

ThreadHub::ThreadHub(int n) : state_(std::make_shared<State>(n)) {
    if (n < 1) throw DomainError("thread hub: need at least one worker");
}
ThreadHub::~ThreadHub() = default;

std::unique_ptr<Transport> ThreadHub::endpoint(int rank) {
    if (rank < 0 || rank >= state_->n) throw DomainError("thread hub: rank out of range");
    return std::make_unique<ThreadTransport>(state_, rank);
}

// ---------------------------------------------------------------------------
// Wire format

std::vector<std::uint8_t> serialize(std::span<const Configuration> items,
                                    std::span<const PathKey> keys) {
    Writer w;
    w.reserve(8 + items.size() * 64);
    w.u64(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
        const auto key = k < keys.size() ? keys[k].bytes() : std::span<const std::uint8_t>{};
        w.u16(std::uint16_t(key.size()));
        w.raw(key.data(), key.size());
        const auto& c = items[k];
        w.u8(c.length);
        w.raw(c.fwd.data(), c.length);
        w.raw(c.bwd.data(), c.length);
        w.f64(c.weight.real());
        w.f64(c.weight.imag());
        w.f64(c.sum.real());
        w.f64(c.sum.imag());
    }
    return w.take();
}

std::vector<std::uint8_t> serialize(const OmegaStore& store) {
    return serialize(store.configurations(), store.keys());
}

std::vector<MergeEntry> deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const std::uint64_t n = r.u64();
    if (n > bytes.size()) throw TransportError("malformed message: implausible entry count");
    std::vector<MergeEntry> out(n);
    for (auto& e : out) {
        const std::uint16_t klen = r.u16();
        if (klen > PathKey::kCapacity) throw TransportError("malformed message: key too long");
        e.key = PathKey::from_bytes(r.raw(klen));
        e.cfg.length = r.u8();
        if (e.cfg.length > kMaxMemory) throw TransportError("malformed message: window too long");
        auto f = r.raw(e.cfg.length);
        std::copy(f.begin(), f.end(), e.cfg.fwd.begin());
        auto b = r.raw(e.cfg.length);
        std::copy(b.begin(), b.end(), e.cfg.bwd.begin());
        const double wr = r.f64();
        const double wi = r.f64();
        const double sr = r.f64();
        const double si = r.f64();
        e.cfg.weight = Complex(wr, wi);
        e.cfg.sum = Complex(sr, si);
    }
    if (!r.done()) throw TransportError("malformed message: trailing bytes");
    return out;
}

// ---------------------------------------------------------------------------
// Protocol

RouteMap plan_routes(std::span<const std::uint64_t> counts) {
    const auto n = counts.size();
    if (n == 0) return {};
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    struct Slot {
        int rank;
        std::uint64_t amount;
    };
    std::vector<Slot> surplus, deficit;
    for (std::size_t w = 0; w < n; ++w) {
        const std::uint64_t target = total / n + (w < total % n ? 1 : 0);
        if (counts[w] > target) surplus.push_back({int(w), counts[w] - target});
        if (counts[w] < target) deficit.push_back({int(w), target - counts[w]});
    }
    RouteMap routes;
    std::size_t i = 0, j = 0;
    while (i < surplus.size() && j < deficit.size()) {
        const std::uint64_t m = std::min(surplus[i].amount, deficit[j].amount);
        routes.push_back({surplus[i].rank, deficit[j].rank, m});
        surplus[i].amount -= m;
        deficit[j].amount -= m;
        if (surplus[i].amount == 0) ++i;
        if (deficit[j].amount == 0) ++j;
    }
    return routes;
}

std::vector<OmegaStore> partition(const OmegaStore& store, int n, const Mask& key_mask) {
    if (n < 1) throw DomainError("partition: need at least one worker");
    const auto& items = store.configurations();
    std::vector<std::pair<PathKey, std::size_t>> order;
    order.reserve(items.size());
    for (std::size_t k = 0; k < items.size(); ++k)
        order.emplace_back(masked_key(items[k], key_mask, store.M()), k);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<OmegaStore> parts;
    const std::size_t total = items.size();
    std::size_t pos = 0;
    for (int w = 0; w < n; ++w) {
        const std::size_t size = total / std::size_t(n) + (std::size_t(w) < total % std::size_t(n) ? 1 : 0);
        OmegaStore part(store.M());
        part.reserve(size);
        for (std::size_t k = 0; k < size; ++k) part.push_back(items[order[pos++].second]);
        parts.push_back(std::move(part));
    }
    return parts;
}

void inter_worker_merge(Transport& tr, OmegaStore& local, const Mask& mask, Execution) {
    const int n = tr.size();
    const int me = tr.rank();
    if (n == 1) return;
    if (local.phase() != StorePhase::Associative || !(local.key_mask() == mask))
        throw NumericalError("inter_worker_merge: local store must be keyed by the merge mask");

    // Keys that a lower rank also holds; they are surrendered once this rank
    // has broadcast its untouched chunk. The accumulated value is the remote
    // mass already owned elsewhere.
    absl::flat_hash_map<PathKey, Complex> aux;
    for (int s = 0; s < n; ++s) {
        tr.set_phase("inter-worker merge, sender " + std::to_string(s));
        if (s == me) {
            const auto bytes = serialize(local);
            for (int d = 0; d < n; ++d)
                if (d != me) tr.send(d, bytes);
            for (const auto& [key, mass] : aux) local.erase(key);
            aux.clear();
            continue;
        }
        const auto remote = deserialize(tr.receive(s));
        for (const auto& e : remote) {
            Configuration* mine = local.find(e.key);
            if (!mine) continue;
            if (me > s) {
                aux[e.key] += e.cfg.sum;
            } else {
                mine->sum += e.cfg.sum;
                if (better_representative(e.cfg, *mine)) {
                    mine->fwd = e.cfg.fwd;
                    mine->bwd = e.cfg.bwd;
                    mine->length = e.cfg.length;
                    mine->weight = e.cfg.weight;
                }
            }
        }
    }
}

RouteMap balance_load(Transport& tr, OmegaStore& local) {
    tr.set_phase("load balance");
    const auto counts = allgather_counts(tr, local.size());
    const RouteMap routes = plan_routes(counts);
    const int me = tr.rank();
    const bool keyed = local.phase() == StorePhase::Associative;
    std::vector<PathKey> keys = keyed ? local.keys() : std::vector<PathKey>{};
    local.make_sequential();
    auto& items = local.configurations();
    for (const Route& r : routes) {
        if (r.from == me) {
            const std::size_t start = items.size() - r.count;
            std::span<const Configuration> tail(items.data() + start, r.count);
            std::span<const PathKey> tail_keys;
            if (keyed) tail_keys = std::span<const PathKey>(keys.data() + start, r.count);
            tr.send(r.to, serialize(tail, tail_keys));
            items.resize(start);
            if (keyed) keys.resize(start);
        } else if (r.to == me) {
            for (auto& e : deserialize(tr.receive(r.from))) items.push_back(e.cfg);
        }
    }
    return routes;
}

CMatrix reduce_density(Transport& tr, const CMatrix& partial) {
    tr.set_phase("density reduction");
    if (tr.rank() != 0) {
        tr.send(0, pack_matrix(partial));
        return partial;
    }
    CMatrix total = partial;
    for (int s = 1; s < tr.size(); ++s) {
        const CMatrix part = unpack_matrix(tr.receive(s));
        if (part.rows() != total.rows() || part.cols() != total.cols())
            throw TransportError("density reduction: rank " + std::to_string(s) +
                                 " sent a matrix of a different dimension");
        total += part;
    }
    return total;
}

double allreduce_max(Transport& tr, double value) {
    tr.set_phase("max reduction");
    const int n = tr.size();
    if (tr.rank() != 0) {
        tr.send(0, pack_u64(std::bit_cast<std::uint64_t>(value)));
        return std::bit_cast<double>(unpack_u64(tr.receive(0)));
    }
    double m = value;
    for (int s = 1; s < n; ++s) m = std::max(m, std::bit_cast<double>(unpack_u64(tr.receive(s))));
    for (int d = 1; d < n; ++d) tr.send(d, pack_u64(std::bit_cast<std::uint64_t>(m)));
    return m;
}

std::vector<std::uint64_t> gather_counts(Transport& tr, std::uint64_t value) {
    if (tr.rank() != 0) {
        tr.send(0, pack_u64(value));
        return {value};
    }
    std::vector<std::uint64_t> out{value};
    for (int s = 1; s < tr.size(); ++s) out.push_back(unpack_u64(tr.receive(s)));
    return out;
}

Backend parse_backend(const std::string& s) {
    if (s == "thread") return Backend::Thread;
    if (s == "process") return Backend::Process;
    throw DomainError("unknown backend '" + s + "' (expected thread or process)");
}

// ---------------------------------------------------------------------------
// Runs

namespace {

void check_global_uniqueness(Transport& tr, const OmegaStore& local) {
    tr.set_phase("key uniqueness scan");
    if (tr.rank() != 0) {
        tr.send(0, serialize(local));
        return;
    }
    absl::flat_hash_set<PathKey> seen(local.keys().begin(), local.keys().end());
    for (int s = 1; s < tr.size(); ++s) {
        for (const auto& e : deserialize(tr.receive(s)))
            if (!seen.insert(e.key).second)
                throw NumericalError("key " + e.key.hex() + " is held by more than one worker");
    }
}

void worker_loop(Transport& tr, const RunSpec& spec, const DistributedOptions& opts,
                 Trajectory* traj, DistributedTelemetry* tel) {
    const int n = tr.size();
    const bool full = spec.mode == Mode::FullQuapi;
    const Mask mask = full ? Mask::all(spec.dk_max()) : spec.mask;
    const double theta = full ? 0.0 : spec.theta;
    const Mask pre = reduce_mask(mask);
    const bool root = tr.rank() == 0;

    tr.set_phase("initialize");
    auto parts = partition(initialize(spec), n, Mask::all(spec.dk_max()));
    OmegaStore local = std::move(parts[std::size_t(tr.rank())]);

    auto record = [&](int t, const OmegaStore& store, const CMatrix& partial, Complex discarded) {
        const CMatrix rho = reduce_density(tr, partial);
        CMatrix d(1, 1);
        d(0, 0) = discarded;
        const CMatrix disc = reduce_density(tr, d);
        const auto counts = gather_counts(tr, store.size());
        if (!root) return;
        std::uint64_t total = 0;
        for (auto c : counts) total += c;
        traj->times.push_back(t * spec.dt());
        traj->trace_drift.push_back(1.0 - std::abs(rho.trace()));
        traj->rho.push_back(rho);
        traj->path_counts.push_back(total);
        traj->discarded.push_back(disc(0, 0));
    };
    record(0, local, extract_density_matrix(local, spec, 0), {});

    for (int t = 1; t <= spec.n_steps; ++t) {
        tr.set_phase("premerge, step " + std::to_string(t));
        OmegaStore merged = premerge(local, pre, spec.exec);
        inter_worker_merge(tr, merged, pre, spec.exec);
        if (opts.check_uniqueness) {
            check_global_uniqueness(tr, merged);
            if (root && tel) ++tel->uniqueness_checks;
        }
        balance_load(tr, merged);
        const auto balanced = gather_counts(tr, merged.size());
        if (root && tel) tel->balanced_counts.push_back(balanced);

        tr.set_phase("expand, step " + std::to_string(t));
        CMatrix partial;
        Complex discarded{};
        if (theta == 0.0 || !spec.exec.streaming) {
            local = expand(merged, spec, t);
            merged = OmegaStore();
            partial = extract_density_matrix(local, spec, t);
            const double gmax = allreduce_max(tr, max_norm_sum(local));
            discarded = filter_relative(local, theta, gmax);
        } else {
            const ExpansionScan scan = scan_expansion(merged, spec, t);
            partial = scan.rho;
            const double gmax = allreduce_max(tr, scan.max_norm);
            local = expand_above(merged, spec, t, theta * theta * gmax, &discarded);
            merged = OmegaStore();
        }
        record(t, local, partial, discarded);
    }
}

Trajectory run_threads(const RunSpec& spec, const DistributedOptions& opts,
                       DistributedTelemetry* tel) {
    ThreadHub hub(opts.workers);
    std::vector<std::unique_ptr<Transport>> ends;
    for (int r = 0; r < opts.workers; ++r) ends.push_back(hub.endpoint(r));
    Trajectory traj;
    std::vector<std::exception_ptr> errors(std::size_t(opts.workers));
    auto body = [&](int r) {
        try {
            worker_loop(*ends[std::size_t(r)], spec, opts, r == 0 ? &traj : nullptr,
                        r == 0 ? tel : nullptr);
        } catch (const std::exception& e) {
            errors[std::size_t(r)] = std::current_exception();
            static_cast<ThreadTransport&>(*ends[std::size_t(r)]).abort(
                "rank " + std::to_string(r) + " failed: " + e.what());
        }
    };
    std::vector<std::thread> pool;
    for (int r = 1; r < opts.workers; ++r) pool.emplace_back(body, r);
    body(0);
    for (auto& th : pool) th.join();
    // Report the first root cause rather than the aborts it triggered.
    for (auto& e : errors)
        if (e) {
            try {
                std::rethrow_exception(e);
            } catch (const TransportError&) {
                continue;
            } catch (...) {
                throw;
            }
        }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return traj;
}

Trajectory run_processes(const RunSpec& spec, const DistributedOptions& opts,
                         DistributedTelemetry* tel) {
    const int n = opts.workers;
    // fds[a][b]: rank a's end of the (a, b) socket pair.
    std::vector<std::vector<int>> fds(std::size_t(n), std::vector<int>(std::size_t(n), -1));
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            int sv[2];
            if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
                throw TransportError(std::string("socketpair failed: ") + std::strerror(errno));
            fds[std::size_t(a)][std::size_t(b)] = sv[0];
            fds[std::size_t(b)][std::size_t(a)] = sv[1];
        }
    auto close_except = [&](int keep) {
        for (int a = 0; a < n; ++a)
            if (a != keep)
                for (int fd : fds[std::size_t(a)])
                    if (fd >= 0) ::close(fd);
    };

    std::cout.flush();
    std::cerr.flush();
    std::vector<pid_t> children;
    for (int r = 1; r < n; ++r) {
        const pid_t pid = ::fork();
        if (pid < 0) throw TransportError(std::string("fork failed: ") + std::strerror(errno));
        if (pid == 0) {
            int code = 0;
            close_except(r);
            {
                ProcessTransport tr(r, n, fds[std::size_t(r)]);
                try {
                    worker_loop(tr, spec, opts, nullptr, nullptr);
                } catch (const std::exception& e) {
                    std::cerr << "worker " << r << " failed: " << e.what() << '\n';
                    code = 3;
                }
            }
            std::cerr.flush();
            ::_exit(code);
        }
        children.push_back(pid);
    }
    close_except(0);

    Trajectory traj;
    std::exception_ptr error;
    {
        ProcessTransport tr(0, n, fds[0]);
        try {
            worker_loop(tr, spec, opts, &traj, tel);
        } catch (...) {
            error = std::current_exception();
        }
    }
    int failed = 0;
    for (pid_t pid : children) {
        int status = 0;
        while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
        }
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failed;
    }
    if (error) std::rethrow_exception(error);
    if (failed) throw TransportError(std::to_string(failed) + " worker process(es) failed");
    return traj;
}

}  // namespace

Trajectory run_distributed(const RunSpec& spec, const DistributedOptions& opts,
                           DistributedTelemetry* telemetry) {
    validate(spec);
    if (opts.workers < 1) throw DomainError("run_distributed: workers must be >= 1");
    if (spec.mode == Mode::PostmergeReference)
        throw DomainError("run_distributed: the post-merging reference runs on one worker only");
    if (opts.backend == Backend::Process && opts.workers > 1) return run_processes(spec, opts, telemetry);
    return run_threads(spec, opts, telemetry);
}

}  // namespace quapi
