#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "rng.hpp"

namespace ri {

//---------------------------------------------------------------------------//
/*!
 * Open-addressing hash set of packed lattice keys.
 *
 * Linear probing on a power-of-two table with key 0 as the empty slot
 * (packed keys are never 0). Iteration order depends on insertion history,
 * so callers needing a canonical order use sortedKeys().
 */
class PointSet
{
  public:
    using Key = std::uint64_t;

    PointSet() = default;
    explicit PointSet(std::size_t expected) { reserve(expected); }

    template<class It>
    PointSet(It first, It last)
    {
        reserve(static_cast<std::size_t>(std::distance(first, last)));
        for (; first != last; ++first)
            insert(*first);
    }

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    void reserve(std::size_t n)
    {
        std::size_t cap = 16;
        while (cap < 2 * n)
            cap <<= 1;
        if (cap > slots_.size())
            rehash(cap);
    }

    /// Returns true if the key was newly inserted.
    bool insert(Key k)
    {
        if (2 * (size_ + 1) > slots_.size())
            rehash(slots_.empty() ? 16 : slots_.size() * 2);
        std::size_t i = mix64(k) & mask_;
        for (;;)
        {
            Key const s = slots_[i];
            if (s == k)
                return false;
            if (s == 0)
            {
                slots_[i] = k;
                ++size_;
                return true;
            }
            i = (i + 1) & mask_;
        }
    }

    bool contains(Key k) const
    {
        if (size_ == 0)
            return false;
        std::size_t i = mix64(k) & mask_;
        for (;;)
        {
            Key const s = slots_[i];
            if (s == k)
                return true;
            if (s == 0)
                return false;
            i = (i + 1) & mask_;
        }
    }

    template<class F>
    void forEach(F&& f) const
    {
        for (Key s : slots_)
            if (s != 0)
                f(s);
    }

    std::vector<Key> sortedKeys() const
    {
        std::vector<Key> out;
        out.reserve(size_);
        forEach([&](Key k) { out.push_back(k); });
        std::sort(out.begin(), out.end());
        return out;
    }

    void clear()
    {
        std::fill(slots_.begin(), slots_.end(), Key{0});
        size_ = 0;
    }

    /// True if any key of the smaller set is in the larger one.
    friend bool intersects(PointSet const& a, PointSet const& b)
    {
        PointSet const& small = a.size() <= b.size() ? a : b;
        PointSet const& large = a.size() <= b.size() ? b : a;
        bool hit = false;
        for (Key s : small.slots_)
        {
            if (s != 0 && large.contains(s))
            {
                hit = true;
                break;
            }
        }
        return hit;
    }

  private:
    void rehash(std::size_t cap)
    {
        std::vector<Key> old = std::move(slots_);
        slots_.assign(cap, Key{0});
        mask_ = cap - 1;
        size_ = 0;
        for (Key s : old)
            if (s != 0)
                insert(s);
    }

    std::vector<Key> slots_;
    std::size_t mask_ = 0;
    std::size_t size_ = 0;
};

//---------------------------------------------------------------------------//
/*!
 * Open-addressing map from packed lattice keys to values; same probing
 * scheme as PointSet.
 */
template<class V>
class PointMap
{
  public:
    using Key = std::uint64_t;

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    void reserve(std::size_t n)
    {
        std::size_t cap = 16;
        while (cap < 2 * n)
            cap <<= 1;
        if (cap > keys_.size())
            rehash(cap);
    }

    /// Value for \p k, default-constructed on first access.
    V& operator[](Key k)
    {
        if (2 * (size_ + 1) > keys_.size())
            rehash(keys_.empty() ? 16 : keys_.size() * 2);
        std::size_t i = mix64(k) & mask_;
        for (;;)
        {
            if (keys_[i] == k)
                return values_[i];
            if (keys_[i] == 0)
            {
                keys_[i] = k;
                ++size_;
                return values_[i];
            }
            i = (i + 1) & mask_;
        }
    }

    V const* find(Key k) const
    {
        if (size_ == 0)
            return nullptr;
        std::size_t i = mix64(k) & mask_;
        for (;;)
        {
            if (keys_[i] == k)
                return &values_[i];
            if (keys_[i] == 0)
                return nullptr;
            i = (i + 1) & mask_;
        }
    }

    bool contains(Key k) const { return find(k) != nullptr; }

    template<class F>
    void forEach(F&& f) const
    {
        for (std::size_t i = 0; i < keys_.size(); ++i)
            if (keys_[i] != 0)
                f(keys_[i], values_[i]);
    }

  private:
    void rehash(std::size_t cap)
    {
        std::vector<Key> old_keys = std::move(keys_);
        std::vector<V> old_values = std::move(values_);
        keys_.assign(cap, Key{0});
        values_.assign(cap, V{});
        mask_ = cap - 1;
        size_ = 0;
        for (std::size_t i = 0; i < old_keys.size(); ++i)
        {
            if (old_keys[i] != 0)
                (*this)[old_keys[i]] = std::move(old_values[i]);
        }
    }

    std::vector<Key> keys_;
    std::vector<V> values_;
    std::size_t mask_ = 0;
    std::size_t size_ = 0;
};

}  // namespace ri
