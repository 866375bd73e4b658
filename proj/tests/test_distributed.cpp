#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <random>
#include <thread>

#include "quapi/distributed.hpp"
#include "support/models.hpp"

using namespace quapi;

namespace {

// Runs body(rank, transport) on n threads joined by one hub.
void on_workers(int n, const std::function<void(int, Transport&)>& body) {
    ThreadHub hub(n);
    std::vector<std::unique_ptr<Transport>> ends;
    for (int r = 0; r < n; ++r) ends.push_back(hub.endpoint(r));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n);
    for (int r = 0; r < n; ++r)
        pool.emplace_back([&, r] {
            try {
                body(r, *ends[r]);
            } catch (...) {
                errors[r] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

OmegaStore random_store(int M, int L, std::size_t n, std::uint64_t seed, int digits) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> digit(0, digits - 1);
    std::normal_distribution<double> g;
    OmegaStore s(M);
    for (std::size_t k = 0; k < n; ++k) {
        Configuration c;
        c.length = static_cast<std::uint8_t>(L);
        for (int j = 0; j < L; ++j) {
            c.fwd[j] = static_cast<std::uint8_t>(digit(rng));
            c.bwd[j] = static_cast<std::uint8_t>(digit(rng));
        }
        c.weight = {g(rng), g(rng)};
        c.sum = c.weight * 1.5;
        s.push_back(c);
    }
    return s;
}

std::string fingerprint(const Configuration& c) {
    std::string s;
    for (int k = 0; k < c.length; ++k) s += char('0' + c.fwd[k]);
    s += '|';
    for (int k = 0; k < c.length; ++k) s += char('0' + c.bwd[k]);
    return s;
}

}  // namespace

TEST_SUITE("distributed") {

TEST_CASE("route planning") {
    std::vector<std::uint64_t> a{5, 1};
    CHECK(plan_routes(a) == RouteMap{{0, 1, 2}});
    std::vector<std::uint64_t> b{4, 4, 4};
    CHECK(plan_routes(b).empty());

    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::uint64_t> counts(8);
        for (auto& c : counts) c = rng() % 50;
        const RouteMap routes = plan_routes(counts);
        std::vector<std::int64_t> after(counts.begin(), counts.end());
        for (const Route& r : routes) {
            CHECK(r.count > 0);
            after[r.from] -= std::int64_t(r.count);
            after[r.to] += std::int64_t(r.count);
        }
        const auto [lo, hi] = std::minmax_element(after.begin(), after.end());
        CHECK(*hi - *lo <= 1);
        CHECK(*lo >= 0);
    }
}

TEST_CASE("partition") {
    const OmegaStore s = random_store(2, 3, 10, 1, 2);
    CHECK(partition(s, 1, Mask::all(3))[0].size() == 10);
    const auto parts = partition(s, 4, Mask::all(3));
    REQUIRE(parts.size() == 4);
    CHECK(parts[0].size() == 3);
    CHECK(parts[1].size() == 3);
    CHECK(parts[2].size() == 2);
    CHECK(parts[3].size() == 2);
    CHECK(partition(s, 12, Mask::all(3))[11].empty());
    CHECK_THROWS_AS(partition(s, 0, Mask::all(3)), DomainError);

    const OmegaStore big = random_store(3, 5, 1000, 2, 3);
    for (int n : {2, 3, 7}) {
        std::multiset<std::string> all, joined;
        for (const auto& c : big.configurations()) all.insert(fingerprint(c));
        PathKey last;
        bool sorted = true, first = true;
        for (const auto& p : partition(big, n, Mask{{0, 2}})) {
            for (const auto& c : p.configurations()) {
                joined.insert(fingerprint(c));
                const PathKey k = masked_key(c, Mask{{0, 2}}, 3);
                if (!first && k < last) sorted = false;
                last = k;
                first = false;
            }
        }
        CHECK(all == joined);
        CHECK(sorted);
    }
}

TEST_CASE("wire format round trip") {
    OmegaStore s = random_store(5, 7, 300, 3, 5);
    const Mask mask{{0, 1, 3}};
    s = premerge(s, mask);
    const auto bytes = serialize(s);
    const auto back = deserialize(bytes);
    REQUIRE(back.size() == s.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
        const auto& a = back[k].cfg;
        const auto& b = s.configurations()[k];
        CHECK(back[k].key == s.key_at(k));
        CHECK(same_path(a, b));
        CHECK(a.weight == b.weight);
        CHECK(a.sum == b.sum);
    }
    CHECK(serialize(std::span<const Configuration>(), std::span<const PathKey>()).size() >= 8);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS(deserialize(truncated));
}

TEST_CASE("thread transport ordering") {
    on_workers(3, [](int rank, Transport& tr) {
        CHECK(tr.size() == 3);
        CHECK(tr.rank() == rank);
        if (rank == 0)
            for (std::uint8_t k = 0; k < 20; ++k) {
                tr.send(1, {k});
                tr.send(2, {std::uint8_t(k + 100)});
            }
        else
            for (std::uint8_t k = 0; k < 20; ++k)
                CHECK(tr.receive(0) == std::vector<std::uint8_t>{std::uint8_t(k + (rank == 2 ? 100 : 0))});
    });
}

TEST_CASE("two workers holding one key") {
    Configuration a, b;
    a.length = b.length = 2;
    a.fwd = {0, 1};
    b.fwd = {1, 1};
    a.weight = a.sum = 0.6;
    b.weight = b.sum = 0.3;
    const Mask mask{{0}};
    for (bool heavy_first : {true, false}) {
        std::vector<OmegaStore> stores(2, OmegaStore(2));
        stores[0].push_back(heavy_first ? a : b);
        stores[1].push_back(heavy_first ? b : a);
        on_workers(2, [&](int r, Transport& tr) {
            stores[r] = premerge(stores[r], mask);
            inter_worker_merge(tr, stores[r], mask);
        });
        CHECK(stores[0].size() == 1);
        CHECK(stores[1].empty());
        const auto& c = stores[0].configurations()[0];
        CHECK(std::abs(c.sum - Complex(0.9)) < 1e-15);
        CHECK(c.weight == Complex(0.6));
        CHECK(c.fwd[0] == 0);
    }
}

TEST_CASE("inter-worker merge equals a single-worker premerge") {
    const OmegaStore whole = random_store(2, 6, 4000, 4, 2);
    const Mask mask{{0, 1, 3, 4}};
    const OmegaStore ref = premerge(whole, mask);
    std::map<std::string, const Configuration*> expected;
    for (std::size_t k = 0; k < ref.size(); ++k) expected[ref.key_at(k).hex()] = &ref.configurations()[k];

    for (int n : {2, 3, 4}) {
        // contiguous input slices, so every rank sees a mix of keys
        std::vector<OmegaStore> stores(n, OmegaStore(2));
        for (std::size_t k = 0; k < whole.size(); ++k)
            stores[k * n / whole.size()].push_back(whole.configurations()[k]);
        std::vector<std::uint64_t> after_balance(n);
        on_workers(n, [&](int r, Transport& tr) {
            stores[r] = premerge(stores[r], mask);
            inter_worker_merge(tr, stores[r], mask);
        });
        std::map<std::string, int> owner;
        bool unique = true, exact = true;
        for (int r = 0; r < n; ++r)
            for (std::size_t k = 0; k < stores[r].size(); ++k) {
                const std::string key = stores[r].key_at(k).hex();
                unique = unique && owner.emplace(key, r).second;
                const auto& c = stores[r].configurations()[k];
                const auto& e = *expected.at(key);
                exact = exact && std::abs(c.sum - e.sum) <= 1e-13 * std::abs(e.sum) &&
                        same_path(c, e) && c.weight == e.weight;
            }
        CAPTURE(n);
        CHECK(unique);
        CHECK(owner.size() == expected.size());
        CHECK(exact);

        Complex total{};
        for (const auto& s : stores) total += s.total_sum();
        CHECK(std::abs(total - whole.total_sum()) <= 1e-13 * std::abs(whole.total_sum()));

        std::multiset<std::string> before;
        for (const auto& s : stores)
            for (const auto& c : s.configurations()) before.insert(fingerprint(c));
        on_workers(n, [&](int r, Transport& tr) {
            balance_load(tr, stores[r]);
            after_balance[r] = stores[r].size();
        });
        std::multiset<std::string> after;
        for (const auto& s : stores)
            for (const auto& c : s.configurations()) after.insert(fingerprint(c));
        CHECK(before == after);
        const auto [lo, hi] = std::minmax_element(after_balance.begin(), after_balance.end());
        CHECK(*hi - *lo <= 1);
    }
}

TEST_CASE("reductions") {
    on_workers(2, [](int r, Transport& tr) {
        CMatrix p = CMatrix::Zero(2, 2);
        p(0, 0) = r == 0 ? 0.4 : 0.3;
        p(1, 1) = r == 0 ? 0.1 : 0.2;
        const CMatrix total = reduce_density(tr, p);
        if (r == 0) {
            CHECK(std::abs(total(0, 0) - Complex(0.7)) < 1e-15);
            CHECK(std::abs(total(1, 1) - Complex(0.3)) < 1e-15);
        }
        CHECK(allreduce_max(tr, r == 0 ? 2.5 : 7.0) == 7.0);
        const auto counts = gather_counts(tr, 10 + r);
        if (r == 0) CHECK(counts == std::vector<std::uint64_t>{10, 11});
    });
    on_workers(1, [](int, Transport& tr) {
        const CMatrix p = CMatrix::Identity(3, 3);
        CHECK(reduce_density(tr, p) == p);
    });
    CHECK_THROWS_AS(on_workers(2, [](int r, Transport& tr) {
                        reduce_density(tr, CMatrix::Identity(r + 2, r + 2));
                    }),
                    TransportError);
}

TEST_CASE("worker-count invariance") {
    const RunSpec spec = models::benchmark(8, 6, 1e-8, 40);
    const Trajectory ref = run(spec);
    for (Backend backend : {Backend::Thread, Backend::Process})
        for (int n : {1, 2, 4}) {
            DistributedOptions opts;
            opts.workers = n;
            opts.backend = backend;
            opts.check_uniqueness = true;
            DistributedTelemetry tel;
            const Trajectory tr = run_distributed(spec, opts, &tel);
            CAPTURE(n);
            CAPTURE(int(backend));
            REQUIRE(tr.rho.size() == ref.rho.size());
            CHECK(models::max_deviation(tr, ref) < 1e-10);
            CHECK(tel.uniqueness_checks == spec.n_steps);
            REQUIRE(tel.balanced_counts.size() == std::size_t(spec.n_steps));
            for (const auto& counts : tel.balanced_counts) {
                const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
                CHECK(*hi - *lo <= 1);
            }
        }
}

TEST_CASE("distributed runs reject the reference mode") {
    RunSpec spec = models::benchmark(6, 4, 0.0, 3);
    spec.mode = Mode::PostmergeReference;
    CHECK_THROWS_AS(run_distributed(spec, {2, Backend::Thread, false}), DomainError);
    CHECK(parse_backend("process") == Backend::Process);
    CHECK_THROWS_AS(parse_backend("mpi"), DomainError);
}

}  // TEST_SUITE
