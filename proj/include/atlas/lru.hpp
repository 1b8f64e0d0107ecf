#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace atlas {

using SteadyClock = std::function<std::chrono::steady_clock::time_point()>;

inline SteadyClock default_steady_clock() {
    return [] { return std::chrono::steady_clock::now(); };
}

/// Capacity-bounded LRU map with per-entry expiry. get() refreshes recency;
/// expired entries are never returned and are dropped when touched. Eviction
/// always removes the least recently used entry, expired or not.
/// All members are thread-safe.
template <class K, class V, class Hash = std::hash<K>>
class LruCache {
public:
    using TimePoint = std::chrono::steady_clock::time_point;
    using Duration = std::chrono::steady_clock::duration;

    explicit LruCache(std::size_t capacity, SteadyClock clock = default_steady_clock())
        : capacity_(capacity), clock_(std::move(clock)) {
        if (capacity_ == 0) throw std::invalid_argument("LRU capacity must be at least 1");
    }

    std::optional<V> get(const K& key) {
        std::lock_guard lock(mu_);
        auto it = index_.find(key);
        if (it == index_.end()) return std::nullopt;
        if (clock_() >= it->second->expires) {
            order_.erase(it->second);
            index_.erase(it);
            return std::nullopt;
        }
        order_.splice(order_.begin(), order_, it->second);
        return it->second->value;
    }

    /// Inserts or replaces; the entry becomes the most recently used.
    void put(const K& key, V value, Duration ttl) {
        std::lock_guard lock(mu_);
        const TimePoint expires = clock_() + ttl;
        if (auto it = index_.find(key); it != index_.end()) {
            it->second->value = std::move(value);
            it->second->expires = expires;
            order_.splice(order_.begin(), order_, it->second);
            return;
        }
        if (index_.size() == capacity_) {
            index_.erase(order_.back().key);
            order_.pop_back();
        }
        order_.push_front(Node{key, std::move(value), expires});
        index_.emplace(key, order_.begin());
    }

    bool erase(const K& key) {
        std::lock_guard lock(mu_);
        auto it = index_.find(key);
        if (it == index_.end()) return false;
        order_.erase(it->second);
        index_.erase(it);
        return true;
    }

    void clear() {
        std::lock_guard lock(mu_);
        order_.clear();
        index_.clear();
    }

    /// Stored entries, including expired ones not yet touched.
    std::size_t size() const {
        std::lock_guard lock(mu_);
        return index_.size();
    }
    std::size_t capacity() const { return capacity_; }

private:
    struct Node {
        K key;
        V value;
        TimePoint expires;
    };

    std::size_t capacity_;
    SteadyClock clock_;
    mutable std::mutex mu_;
    std::list<Node> order_;  // front = most recent
    std::unordered_map<K, typename std::list<Node>::iterator, Hash> index_;
};

}  // namespace atlas
