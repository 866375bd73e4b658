#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <absl/container/flat_hash_set.h>

#include "quapi/common.hpp"

namespace quapi {

/// Largest memory window (in time points) a configuration can hold.
inline constexpr int kMaxMemory = 32;

/// A forward/backward path window. Slot length-1 is the newest point.
struct Configuration {
    std::array<std::uint8_t, kMaxMemory> fwd{};
    std::array<std::uint8_t, kMaxMemory> bwd{};
    std::uint8_t length = 0;
    Complex weight{};  // amplitude of the representative path
    Complex sum{};     // accumulated amplitude of every path merged into it

    std::span<const std::uint8_t> fwd_path() const { return {fwd.data(), length}; }
    std::span<const std::uint8_t> bwd_path() const { return {bwd.data(), length}; }
    std::uint8_t newest_fwd() const { return fwd[length - 1u]; }
    std::uint8_t newest_bwd() const { return bwd[length - 1u]; }
};

/// Lexicographic order on (fwd, bwd) over the stored window.
bool path_less(const Configuration& a, const Configuration& b);
bool same_path(const Configuration& a, const Configuration& b);

/// Relative gap below which two squared weights count as equal.
inline constexpr double kRepresentativeTieTol = 1e-11;

/// Representative rule: larger |weight| wins; equal magnitudes (within
/// kRepresentativeTieTol) fall back to the lexicographically smaller path.
bool better_representative(const Configuration& challenger, const Configuration& resident);

/// Sorted distinct memory lags. Lag 0 is the newest point of a window.
struct Mask {
    std::vector<int> lags;

    static Mask all(int dk_max);
    /// lag 0, the dk_eff/2 smallest lags after it, the rest spread evenly up
    /// to dk_max - 1.
    static Mask dense(int dk_max, int dk_eff);

    int size() const { return static_cast<int>(lags.size()); }
    bool contains(int lag) const;
    bool operator==(const Mask&) const = default;
};

/// Throws DomainError unless lags are sorted, distinct, contain 0 and lie in
/// [0, dk_max).
void validate_mask(const Mask& mask, int dk_max);

/// { m - 1 : m in mask, m >= 1 }.
Mask reduce_mask(const Mask& mask);

std::string to_string(const Mask& mask);

/// Packed masked path digits (fwd * M + bwd), most recent first.
class PathKey {
public:
    static constexpr std::size_t kCapacity = 2 * kMaxMemory;

    PathKey() = default;
    void push_digit(unsigned digit, bool wide);

    std::span<const std::uint8_t> bytes() const { return {data_.data(), size_}; }
    std::size_t size() const { return size_; }
    std::uint64_t hash() const;
    std::string hex() const;
    static PathKey from_bytes(std::span<const std::uint8_t> raw);

    bool operator==(const PathKey& other) const;
    bool operator<(const PathKey& other) const;

    template <class H>
    friend H AbslHashValue(H h, const PathKey& k) {
        return H::combine(std::move(h), k.hash());
    }

private:
    std::array<std::uint8_t, kCapacity> data_{};
    std::uint8_t size_ = 0;
};

/// Key over the mask lags present in the window.
PathKey masked_key(const Configuration& cfg, const Mask& mask, int M);

enum class StorePhase { Sequential, Associative };

namespace detail {

// Index over positions of a key vector: slots hold 4-byte positions and
// lookups by PathKey go through heterogeneous hashing.
struct KeyIndex {
    struct Hash {
        using is_transparent = void;
        const std::vector<PathKey>* keys;
        std::size_t operator()(std::uint32_t i) const { return (*keys)[i].hash(); }
        std::size_t operator()(const PathKey& k) const { return k.hash(); }
    };
    struct Eq {
        using is_transparent = void;
        const std::vector<PathKey>* keys;
        bool operator()(std::uint32_t a, std::uint32_t b) const { return (*keys)[a] == (*keys)[b]; }
        bool operator()(std::uint32_t a, const PathKey& k) const { return (*keys)[a] == k; }
        bool operator()(const PathKey& k, std::uint32_t a) const { return (*keys)[a] == k; }
    };

    KeyIndex() : slots(0, Hash{&keys}, Eq{&keys}) {}
    KeyIndex(const KeyIndex&) = delete;
    KeyIndex& operator=(const KeyIndex&) = delete;

    std::vector<PathKey> keys;
    absl::flat_hash_set<std::uint32_t, Hash, Eq> slots;
};

}  // namespace detail

/// Configurations either as a plain sequence (expansion, filtering) or
/// indexed by masked key (merging).
class OmegaStore {
public:
    OmegaStore() = default;
    explicit OmegaStore(int M) : M_(M) {}
    OmegaStore(const OmegaStore& other);
    OmegaStore& operator=(const OmegaStore& other);
    OmegaStore(OmegaStore&&) noexcept = default;
    OmegaStore& operator=(OmegaStore&&) noexcept = default;

    int M() const { return M_; }
    StorePhase phase() const { return phase_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    const std::vector<Configuration>& configurations() const { return items_; }
    std::vector<Configuration>& configurations() { return items_; }
    void reserve(std::size_t n);
    void push_back(const Configuration& c);

    // Associative phase -----------------------------------------------------
    /// Mask under which the index was built.
    const Mask& key_mask() const { return key_mask_; }
    const PathKey& key_at(std::size_t i) const { return index_->keys[i]; }
    const std::vector<PathKey>& keys() const;
    Configuration* find(const PathKey& key);
    const Configuration* find(const PathKey& key) const;
    /// Inserts a new key; throws if it is already present.
    Configuration& insert(const PathKey& key, const Configuration& c);
    /// Inserts `c` under a new key, or returns the resident entry.
    std::pair<Configuration*, bool> try_insert(const PathKey& key, const Configuration& c);
    /// Removes a key (swap with the last entry). Returns false if absent.
    bool erase(const PathKey& key);

    /// Builds the index from the current configurations; keys must be unique.
    void make_associative(const Mask& mask);
    /// Drops the index.
    void make_sequential();

    Complex total_sum() const;

private:
    int M_ = 0;
    StorePhase phase_ = StorePhase::Sequential;
    std::vector<Configuration> items_;
    std::unique_ptr<detail::KeyIndex> index_;
    Mask key_mask_;
};

struct Execution {
    unsigned threads = 1;
    /// Filtered steps scan the successors twice and only store survivors.
    bool streaming = true;
};

/// Groups configurations by masked key. The result is associative, one entry
/// per key in first-occurrence order, sums accumulated in input order. The
/// threaded variant returns bitwise the same store.
OmegaStore premerge(const OmegaStore& store, const Mask& pre_mask, Execution exec = {});

/// Removes configurations with |sum| < theta * max |sum| and returns the
/// complex total of what was removed.
Complex filter(OmegaStore& store, double theta);
/// filter() against a maximum |sum|^2 supplied by the caller (e.g. the
/// global maximum over all workers).
Complex filter_relative(OmegaStore& store, double theta, double max_norm);
/// Same with an absolute threshold on |sum|.
Complex filter_absolute(OmegaStore& store, double threshold);

double max_abs_sum(const OmegaStore& store);
/// max |sum|^2, computed exactly as the filters compare it.
double max_norm_sum(const OmegaStore& store);

/// CSV: key_hex,fwd,bwd,re_weight,im_weight,re_sum,im_sum
void write_store_csv(std::ostream& os, const OmegaStore& store, const Mask& mask);

}  // namespace quapi
