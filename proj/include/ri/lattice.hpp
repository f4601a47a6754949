#pragma once

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ri {

inline constexpr int kMinDim = 3;
inline constexpr int kMaxDim = 8;

using Coord = std::int32_t;

//---------------------------------------------------------------------------//
/*!
 * A point of Z^d.
 *
 * Unused trailing coordinates are kept at zero so that equality and
 * hashing do not depend on them.
 */
struct Point
{
    std::array<Coord, kMaxDim> c{};
    int dim = 0;

    Point() = default;
    explicit Point(int d) : dim{d} {}
    Point(std::initializer_list<Coord> coords)
        : dim{static_cast<int>(coords.size())}
    {
        if (coords.size() > kMaxDim)
        {
            throw std::invalid_argument("Point: too many coordinates");
        }
        std::copy(coords.begin(), coords.end(), c.begin());
    }

    static Point origin(int d) { return Point(d); }
    static Point unit(int d, int axis, Coord length = 1)
    {
        Point p(d);
        p.c[axis] = length;
        return p;
    }

    Coord& operator[](int i) { return c[i]; }
    Coord operator[](int i) const { return c[i]; }

    friend bool operator==(Point const&, Point const&) = default;

    friend Point operator+(Point a, Point const& b)
    {
        for (int i = 0; i < kMaxDim; ++i)
            a.c[i] += b.c[i];
        return a;
    }
    friend Point operator-(Point a, Point const& b)
    {
        for (int i = 0; i < kMaxDim; ++i)
            a.c[i] -= b.c[i];
        return a;
    }
    friend bool operator<(Point const& a, Point const& b)
    {
        return a.c < b.c;
    }
};

inline std::string to_string(Point const& p)
{
    std::string s = "(";
    for (int i = 0; i < p.dim; ++i)
    {
        if (i)
            s += ",";
        s += std::to_string(p.c[i]);
    }
    return s + ")";
}

namespace detail {
inline void requireSameDim(Point const& x, Point const& y)
{
    if (x.dim != y.dim)
    {
        throw std::invalid_argument("dimension mismatch: " + to_string(x)
                                    + " vs " + to_string(y));
    }
}
}  // namespace detail

/// The l1 metric |x - y|.
inline std::int64_t l1Dist(Point const& x, Point const& y)
{
    detail::requireSameDim(x, y);
    std::int64_t s = 0;
    for (int i = 0; i < x.dim; ++i)
        s += std::abs(static_cast<std::int64_t>(x.c[i]) - y.c[i]);
    return s;
}

inline std::int64_t l1Norm(Point const& x)
{
    return l1Dist(x, Point::origin(x.dim));
}

inline double l2Norm(Point const& x)
{
    double s = 0;
    for (int i = 0; i < x.dim; ++i)
        s += static_cast<double>(x.c[i]) * x.c[i];
    return std::sqrt(s);
}

/// <xy> = 1 + |x - y|.
inline std::int64_t gauge(Point const& x, Point const& y)
{
    return 1 + l1Dist(x, y);
}

//---------------------------------------------------------------------------//
// Tree spread <W>
//---------------------------------------------------------------------------//

inline constexpr std::size_t kMaxSpreadSize = 6;

/*!
 * Visit every labeled tree on n vertices by decoding all n^(n-2) Pruefer
 * sequences. The visitor receives the n-1 edges as index pairs.
 */
template<class F>
void forEachLabeledTree(int n, F&& visit)
{
    if (n < 1)
    {
        throw std::invalid_argument("forEachLabeledTree: n must be >= 1");
    }
    std::vector<std::pair<int, int>> edges;
    if (n == 1)
    {
        visit(std::span<std::pair<int, int> const>{edges});
        return;
    }
    if (n == 2)
    {
        edges.emplace_back(0, 1);
        visit(std::span<std::pair<int, int> const>{edges});
        return;
    }
    int const len = n - 2;
    std::vector<int> seq(len, 0);
    std::vector<int> degree(n);
    for (;;)
    {
        // Decode
        std::fill(degree.begin(), degree.end(), 1);
        for (int v : seq)
            ++degree[v];
        edges.clear();
        for (int v : seq)
        {
            int leaf = 0;
            while (degree[leaf] != 1)
                ++leaf;
            edges.emplace_back(leaf, v);
            --degree[leaf];
            --degree[v];
        }
        int a = -1;
        int b = -1;
        for (int v = 0; v < n; ++v)
        {
            if (degree[v] == 1)
                (a < 0 ? a : b) = v;
        }
        edges.emplace_back(a, b);
        visit(std::span<std::pair<int, int> const>{edges});

        // Advance odometer
        int i = 0;
        while (i < len && ++seq[i] == n)
        {
            seq[i] = 0;
            ++i;
        }
        if (i == len)
            break;
    }
}

/*!
 * <W>: minimum over labeled trees on W of the product of edge gauges.
 *
 * Exhaustive over Pruefer sequences, so |W| is limited to 6 (1296 trees).
 */
inline std::int64_t spread(std::span<Point const> w)
{
    if (w.empty())
    {
        throw std::invalid_argument("spread: empty point set");
    }
    if (w.size() > kMaxSpreadSize)
    {
        throw std::invalid_argument("spread: unsupported set size "
                                    + std::to_string(w.size()) + " > 6");
    }
    auto const n = static_cast<int>(w.size());
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    forEachLabeledTree(n, [&](auto edges) {
        std::int64_t prod = 1;
        for (auto [a, b] : edges)
            prod *= gauge(w[a], w[b]);
        best = std::min(best, prod);
    });
    return best;
}

//---------------------------------------------------------------------------//
/*!
 * Dimension context for an experiment, including the packing of points
 * into 64-bit keys.
 *
 * Each axis gets floor(64/d) bits holding the coordinate plus a bias of
 * 2^(bits-1); the key 0 never encodes a representable point and serves as
 * the empty marker in hash tables. A unit step along axis j adds or
 * subtracts 2^(bits*j), which lets walks update keys incrementally.
 */
class Lattice
{
  public:
    using Key = std::uint64_t;

    explicit Lattice(int d) : d_{d}
    {
        if (d < kMinDim || d > kMaxDim)
        {
            throw std::invalid_argument("Lattice: dimension "
                                        + std::to_string(d)
                                        + " outside 3..8");
        }
        bits_ = 64 / d;
        bias_ = Coord{1} << (bits_ - 1);
        mask_ = (bits_ == 64) ? ~Key{0} : ((Key{1} << bits_) - 1);
    }

    int dim() const { return d_; }
    int bitsPerAxis() const { return bits_; }
    /// Largest |coordinate| representable in a key.
    Coord maxAbsCoord() const { return bias_ - 1; }

    Point origin() const { return Point::origin(d_); }
    Point unit(int axis, Coord len = 1) const
    {
        return Point::unit(d_, axis, len);
    }

    Key pack(Point const& p) const
    {
        if (p.dim != d_)
        {
            throw std::invalid_argument("pack: point " + to_string(p)
                                        + " has wrong dimension");
        }
        Key k = 0;
        for (int i = 0; i < d_; ++i)
        {
            if (std::abs(p.c[i]) > maxAbsCoord())
            {
                throw std::out_of_range("pack: coordinate of " + to_string(p)
                                        + " exceeds packing range");
            }
            k |= static_cast<Key>(p.c[i] + bias_) << (bits_ * i);
        }
        return k;
    }

    Point unpack(Key k) const
    {
        Point p(d_);
        for (int i = 0; i < d_; ++i)
        {
            p.c[i] = static_cast<Coord>((k >> (bits_ * i)) & mask_) - bias_;
        }
        return p;
    }

    Coord coord(Key k, int axis) const
    {
        return static_cast<Coord>((k >> (bits_ * axis)) & mask_) - bias_;
    }

    /// Key increment for a +1 step along \p axis.
    Key axisStep(int axis) const { return Key{1} << (bits_ * axis); }

    std::int64_t l1Norm(Key k) const
    {
        std::int64_t s = 0;
        for (int i = 0; i < d_; ++i)
            s += std::abs(coord(k, i));
        return s;
    }

    void requireRadius(std::int64_t radius) const
    {
        if (radius + 1 > maxAbsCoord())
        {
            throw std::out_of_range(
                "radius " + std::to_string(radius)
                + " exceeds the packing range for d=" + std::to_string(d_));
        }
    }

  private:
    int d_;
    int bits_;
    Coord bias_;
    Key mask_;
};

//---------------------------------------------------------------------------//
// Balls and spheres in the l1 metric
//---------------------------------------------------------------------------//

struct Ball
{
    Point center;
    std::int64_t radius = 0;

    bool contains(Point const& y) const
    {
        return l1Dist(y, center) <= radius;
    }
};

namespace detail {
template<class F>
void forEachInL1Ball(int d, int axis, std::int64_t budget, Point& p, F& f)
{
    if (axis == d)
    {
        f(p);
        return;
    }
    for (std::int64_t v = -budget; v <= budget; ++v)
    {
        p.c[axis] = static_cast<Coord>(v);
        forEachInL1Ball(d, axis + 1, budget - std::abs(v), p, f);
    }
    p.c[axis] = 0;
}
}  // namespace detail

/// Visit points of the ball in lexicographic coordinate order.
template<class F>
void forEachInBall(Ball const& b, F&& f)
{
    if (b.radius < 0)
        return;
    Point offset(b.center.dim);
    auto shifted = [&](Point const& p) { f(p + b.center); };
    detail::forEachInL1Ball(b.center.dim, 0, b.radius, offset, shifted);
}

namespace detail {
template<class F>
void forEachOnL1Sphere(int d, int axis, std::int64_t budget, Point& p, F& f)
{
    if (axis == d - 1)
    {
        p.c[axis] = static_cast<Coord>(-budget);
        f(p);
        if (budget != 0)
        {
            p.c[axis] = static_cast<Coord>(budget);
            f(p);
        }
        p.c[axis] = 0;
        return;
    }
    for (std::int64_t v = -budget; v <= budget; ++v)
    {
        p.c[axis] = static_cast<Coord>(v);
        forEachOnL1Sphere(d, axis + 1, budget - std::abs(v), p, f);
    }
    p.c[axis] = 0;
}
}  // namespace detail

/// Visit points at l1 distance exactly radius, in lexicographic order.
template<class F>
void forEachOnSphere(Ball const& b, F&& f)
{
    if (b.radius < 0)
        return;
    Point offset(b.center.dim);
    auto shifted = [&](Point const& p) { f(p + b.center); };
    detail::forEachOnL1Sphere(b.center.dim, 0, b.radius, offset, shifted);
}

inline std::vector<Point> ballPoints(Ball const& b)
{
    std::vector<Point> out;
    forEachInBall(b, [&](Point const& p) { out.push_back(p); });
    return out;
}

/// Points at l1 distance exactly r from the center.
inline std::vector<Point> spherePoints(Ball const& b)
{
    std::vector<Point> out;
    forEachOnSphere(b, [&](Point const& p) { out.push_back(p); });
    return out;
}

/// |{x in Z^d : |x|_1 <= r}| = sum_k 2^k C(d,k) C(r,k).
inline std::uint64_t ballSize(int d, std::int64_t r)
{
    if (r < 0)
        return 0;
    auto binom = [](std::int64_t n, std::int64_t k) -> std::uint64_t {
        if (k < 0 || k > n)
            return 0;
        std::uint64_t res = 1;
        for (std::int64_t i = 1; i <= k; ++i)
            res = res * static_cast<std::uint64_t>(n - k + i)
                  / static_cast<std::uint64_t>(i);
        return res;
    };
    std::uint64_t total = 0;
    for (int k = 0; k <= d; ++k)
        total += (std::uint64_t{1} << k) * binom(d, k) * binom(r, k);
    return total;
}

inline std::uint64_t sphereSize(int d, std::int64_t r)
{
    return r == 0 ? 1 : ballSize(d, r) - ballSize(d, r - 1);
}

}  // namespace ri
