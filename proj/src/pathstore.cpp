#include "quapi/pathstore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>
#include <sstream>
#include <thread>

#include <absl/container/flat_hash_map.h>

#include "quapi/simd.hpp"

namespace quapi {

bool path_less(const Configuration& a, const Configuration& b) {
    const auto n = std::min(a.length, b.length);
    const int f = std::memcmp(a.fwd.data(), b.fwd.data(), n);
    if (f != 0) return f < 0;
    if (a.length != b.length) return a.length < b.length;
    return std::memcmp(a.bwd.data(), b.bwd.data(), n) < 0;
}

bool same_path(const Configuration& a, const Configuration& b) {
    return a.length == b.length && std::memcmp(a.fwd.data(), b.fwd.data(), a.length) == 0 &&
           std::memcmp(a.bwd.data(), b.bwd.data(), a.length) == 0;
}

bool better_representative(const Configuration& challenger, const Configuration& resident) {
    const double c = std::norm(challenger.weight);
    const double r = std::norm(resident.weight);
    // Symmetric paths reach equal magnitudes by different summation orders, so
    // magnitudes this close count as a tie and the path order decides.
    if (std::abs(c - r) > kRepresentativeTieTol * std::max(c, r)) return c > r;
    return path_less(challenger, resident);
}

// ---------------------------------------------------------------------------

Mask Mask::all(int dk_max) {
    Mask m;
    for (int d = 0; d < dk_max; ++d) m.lags.push_back(d);
    return m;
}

Mask Mask::dense(int dk_max, int dk_eff) {
    if (dk_max < 1 || dk_eff < 1) throw DomainError("mask: dk_max and dk_eff must be >= 1");
    if (dk_eff >= dk_max) return all(dk_max);
    const int d0 = dk_eff / 2;
    Mask m;
    for (int d = 0; d <= d0; ++d) m.lags.push_back(d);
    const int rest = dk_eff - d0 - 1;
    const int hi = dk_max - 1;
    for (int k = 1; k <= rest; ++k) {
        int lag = static_cast<int>(std::lround(d0 + double(hi - d0) * k / rest));
        lag = std::max(lag, m.lags.back() + 1);
        m.lags.push_back(lag);
    }
    return m;
}

bool Mask::contains(int lag) const { return std::binary_search(lags.begin(), lags.end(), lag); }

void validate_mask(const Mask& mask, int dk_max) {
    if (mask.lags.empty() || mask.lags.front() != 0)
        throw DomainError("mask must contain lag 0");
    for (std::size_t k = 0; k < mask.lags.size(); ++k) {
        if (mask.lags[k] < 0 || mask.lags[k] >= dk_max)
            throw DomainError("mask lag " + std::to_string(mask.lags[k]) + " outside [0, " +
                              std::to_string(dk_max) + ")");
        if (k > 0 && mask.lags[k] <= mask.lags[k - 1])
            throw DomainError("mask lags must be sorted and distinct");
    }
}

Mask reduce_mask(const Mask& mask) {
    if (!mask.contains(0)) throw DomainError("reduce_mask: mask must contain lag 0");
    Mask r;
    for (int m : mask.lags)
        if (m >= 1) r.lags.push_back(m - 1);
    return r;
}

std::string to_string(const Mask& mask) {
    std::ostringstream os;
    for (std::size_t k = 0; k < mask.lags.size(); ++k) os << (k ? "," : "") << mask.lags[k];
    return os.str();
}

// ---------------------------------------------------------------------------

void PathKey::push_digit(unsigned digit, bool wide) {
    if (size_ + (wide ? 2u : 1u) > kCapacity) throw DomainError("path key overflow");
    data_[size_++] = static_cast<std::uint8_t>(digit & 0xff);
    if (wide) data_[size_++] = static_cast<std::uint8_t>(digit >> 8);
}

std::uint64_t PathKey::hash() const {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ size_;
    std::size_t k = 0;
    for (; k + 8 <= size_; k += 8) {
        std::uint64_t w;
        std::memcpy(&w, data_.data() + k, 8);
        h = (h ^ w) * 0xbf58476d1ce4e5b9ULL;
        h ^= h >> 31;
    }
    if (k < size_) {
        std::uint64_t w = 0;
        std::memcpy(&w, data_.data() + k, size_ - k);
        h = (h ^ w) * 0xbf58476d1ce4e5b9ULL;
        h ^= h >> 31;
    }
    h *= 0x94d049bb133111ebULL;
    return h ^ (h >> 29);
}

std::string PathKey::hex() const {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(2 * size_);
    for (std::size_t k = 0; k < size_; ++k) {
        s.push_back(digits[data_[k] >> 4]);
        s.push_back(digits[data_[k] & 15]);
    }
    return s;
}

PathKey PathKey::from_bytes(std::span<const std::uint8_t> raw) {
    if (raw.size() > kCapacity) throw DomainError("path key too long");
    PathKey k;
    std::memcpy(k.data_.data(), raw.data(), raw.size());
    k.size_ = static_cast<std::uint8_t>(raw.size());
    return k;
}

bool PathKey::operator==(const PathKey& other) const {
    return size_ == other.size_ && std::memcmp(data_.data(), other.data_.data(), size_) == 0;
}

bool PathKey::operator<(const PathKey& other) const {
    const auto n = std::min(size_, other.size_);
    const int c = std::memcmp(data_.data(), other.data_.data(), n);
    if (c != 0) return c < 0;
    return size_ < other.size_;
}

PathKey masked_key(const Configuration& cfg, const Mask& mask, int M) {
    const bool wide = M * M > 256;
    PathKey key;
    for (int lag : mask.lags) {
        if (lag >= cfg.length) break;
        const int slot = cfg.length - 1 - lag;
        key.push_digit(unsigned(cfg.fwd[slot]) * unsigned(M) + cfg.bwd[slot], wide);
    }
    return key;
}

// ---------------------------------------------------------------------------

OmegaStore::OmegaStore(const OmegaStore& other)
    : M_(other.M_), phase_(StorePhase::Sequential), items_(other.items_) {
    if (other.phase_ == StorePhase::Associative) make_associative(other.key_mask_);
}

OmegaStore& OmegaStore::operator=(const OmegaStore& other) {
    if (this != &other) {
        OmegaStore copy(other);
        *this = std::move(copy);
    }
    return *this;
}

const std::vector<PathKey>& OmegaStore::keys() const {
    static const std::vector<PathKey> none;
    return index_ ? index_->keys : none;
}

void OmegaStore::push_back(const Configuration& c) {
    if (phase_ != StorePhase::Sequential)
        throw NumericalError("push_back on a store in associative phase");
    items_.push_back(c);
}

Configuration* OmegaStore::find(const PathKey& key) {
    if (!index_) return nullptr;
    const auto it = index_->slots.find(key);
    return it == index_->slots.end() ? nullptr : &items_[*it];
}

const Configuration* OmegaStore::find(const PathKey& key) const {
    if (!index_) return nullptr;
    const auto it = index_->slots.find(key);
    return it == index_->slots.end() ? nullptr : &items_[*it];
}

std::pair<Configuration*, bool> OmegaStore::try_insert(const PathKey& key, const Configuration& c) {
    if (phase_ != StorePhase::Associative)
        throw NumericalError("insert on a store in sequential phase");
    const auto it = index_->slots.find(key);
    if (it != index_->slots.end()) return {&items_[*it], false};
    const auto pos = static_cast<std::uint32_t>(items_.size());
    index_->keys.push_back(key);
    items_.push_back(c);
    index_->slots.insert(pos);
    return {&items_.back(), true};
}

Configuration& OmegaStore::insert(const PathKey& key, const Configuration& c) {
    const auto [cfg, fresh] = try_insert(key, c);
    if (!fresh) throw NumericalError("duplicate key " + key.hex());
    return *cfg;
}

void OmegaStore::reserve(std::size_t n) {
    items_.reserve(n);
    if (phase_ == StorePhase::Associative) {
        index_->keys.reserve(n);
        index_->slots.reserve(n);
    }
}

bool OmegaStore::erase(const PathKey& key) {
    if (!index_) return false;
    auto& slots = index_->slots;
    auto& keys = index_->keys;
    const auto it = slots.find(key);
    if (it == slots.end()) return false;
    const std::uint32_t pos = *it;
    const auto last = static_cast<std::uint32_t>(items_.size() - 1);
    slots.erase(it);
    if (pos != last) {
        slots.erase(last);
        items_[pos] = items_[last];
        keys[pos] = keys[last];
        slots.insert(pos);
    }
    items_.pop_back();
    keys.pop_back();
    return true;
}

void OmegaStore::make_associative(const Mask& mask) {
    index_ = std::make_unique<detail::KeyIndex>();
    index_->keys.reserve(items_.size());
    index_->slots.reserve(items_.size());
    key_mask_ = mask;
    for (std::size_t k = 0; k < items_.size(); ++k) {
        index_->keys.push_back(masked_key(items_[k], mask, M_));
        if (!index_->slots.insert(static_cast<std::uint32_t>(k)).second)
            throw NumericalError("make_associative: duplicate key " + index_->keys.back().hex());
    }
    phase_ = StorePhase::Associative;
}

void OmegaStore::make_sequential() {
    index_.reset();
    phase_ = StorePhase::Sequential;
}

Complex OmegaStore::total_sum() const {
    Complex s{};
    for (const auto& c : items_) s += c.sum;
    return s;
}

// ---------------------------------------------------------------------------

namespace {

void absorb(Configuration& resident, const Configuration& incoming) {
    resident.sum += incoming.sum;
    if (better_representative(incoming, resident)) {
        resident.fwd = incoming.fwd;
        resident.bwd = incoming.bwd;
        resident.length = incoming.length;
        resident.weight = incoming.weight;
    }
}

OmegaStore premerge_sequential(const OmegaStore& store, const Mask& pre_mask) {
    OmegaStore out(store.M());
    out.make_associative(pre_mask);
    out.reserve(store.size());
    for (const auto& c : store.configurations()) {
        const auto [resident, fresh] = out.try_insert(masked_key(c, pre_mask, store.M()), c);
        if (!fresh) absorb(*resident, c);
    }
    return out;
}

OmegaStore premerge_threaded(const OmegaStore& store, const Mask& pre_mask, unsigned threads) {
    const auto& in = store.configurations();
    const std::size_t n = in.size();
    std::vector<PathKey> keys(n);
    std::vector<std::uint64_t> hashes(n);
    auto run = [&](auto&& body) {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(body, t);
        for (auto& th : pool) th.join();
    };
    run([&](unsigned t) {
        for (std::size_t k = t; k < n; k += threads) {
            keys[k] = masked_key(in[k], pre_mask, store.M());
            hashes[k] = keys[k].hash();
        }
    });

    // Each shard owns the keys whose hash maps to it and visits the input in
    // order, so per-key accumulation order matches the sequential pass.
    struct Entry {
        std::size_t first;
        Configuration cfg;
    };
    std::vector<std::vector<Entry>> shards(threads);
    run([&](unsigned t) {
        absl::flat_hash_map<PathKey, std::size_t> local;
        local.reserve(n / threads + 16);
        auto& entries = shards[t];
        for (std::size_t k = 0; k < n; ++k) {
            if ((hashes[k] >> 7) % threads != t) continue;
            const auto [it, fresh] = local.try_emplace(keys[k], entries.size());
            if (fresh)
                entries.push_back({k, in[k]});
            else
                absorb(entries[it->second].cfg, in[k]);
        }
    });

    std::vector<const Entry*> order;
    for (const auto& s : shards)
        for (const auto& e : s) order.push_back(&e);
    std::sort(order.begin(), order.end(),
              [](const Entry* a, const Entry* b) { return a->first < b->first; });
    OmegaStore out(store.M());
    out.make_associative(pre_mask);
    out.reserve(order.size());
    for (const Entry* e : order) out.insert(keys[e->first], e->cfg);
    return out;
}

Complex remove_below(OmegaStore& store, double threshold_sq) {
    Complex discarded{};
    auto& items = store.configurations();
    const bool indexed = store.phase() == StorePhase::Associative;
    const Mask mask = store.key_mask();
    std::size_t w = 0;
    for (std::size_t r = 0; r < items.size(); ++r) {
        if (std::norm(items[r].sum) < threshold_sq) {
            discarded += items[r].sum;
            continue;
        }
        if (w != r) items[w] = items[r];
        ++w;
    }
    if (w == items.size()) return discarded;
    items.resize(w);
    if (indexed) store.make_associative(mask);
    return discarded;
}

}  // namespace

OmegaStore premerge(const OmegaStore& store, const Mask& pre_mask, Execution exec) {
    if (store.phase() != StorePhase::Sequential)
        throw NumericalError("premerge expects a store in sequential phase");
    if (exec.threads <= 1 || store.size() < 4096) return premerge_sequential(store, pre_mask);
    return premerge_threaded(store, pre_mask, exec.threads);
}

double max_norm_sum(const OmegaStore& store) {
    const auto& items = store.configurations();
    if (items.empty()) return 0.0;
    return simd::max_norm(&items[0].sum, sizeof(Configuration), items.size());
}

double max_abs_sum(const OmegaStore& store) { return std::sqrt(max_norm_sum(store)); }

Complex filter(OmegaStore& store, double theta) {
    if (!(theta >= 0.0)) throw DomainError("filter: theta must be >= 0");
    if (theta == 0.0 || store.empty()) return {};
    return remove_below(store, theta * theta * max_norm_sum(store));
}

Complex filter_relative(OmegaStore& store, double theta, double max_norm) {
    if (!(theta >= 0.0)) throw DomainError("filter: theta must be >= 0");
    if (theta == 0.0 || store.empty()) return {};
    return remove_below(store, theta * theta * max_norm);
}

Complex filter_absolute(OmegaStore& store, double threshold) {
    if (!(threshold > 0.0) || store.empty()) return {};
    return remove_below(store, threshold * threshold);
}

void write_store_csv(std::ostream& os, const OmegaStore& store, const Mask& mask) {
    os << "key_hex,fwd,bwd,re_weight,im_weight,re_sum,im_sum\n";
    os.precision(17);
    for (const auto& c : store.configurations()) {
        os << masked_key(c, mask, store.M()).hex() << ',';
        for (int k = 0; k < c.length; ++k) os << (k ? " " : "") << int(c.fwd[k]);
        os << ',';
        for (int k = 0; k < c.length; ++k) os << (k ? " " : "") << int(c.bwd[k]);
        os << ',' << c.weight.real() << ',' << c.weight.imag() << ',' << c.sum.real() << ','
           << c.sum.imag() << '\n';
    }
}

}  // namespace quapi
