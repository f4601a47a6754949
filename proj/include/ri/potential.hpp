#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <boost/math/quadrature/gauss.hpp>

#include "lattice.hpp"
#include "point_set.hpp"

namespace ri {

/// Singular, ill-conditioned or otherwise failed numerical solve.
class NumericError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Sorted absolute coordinates; the orbit representative of x under the
/// hyperoctahedral group.
using Canonical = std::array<Coord, kMaxDim>;

inline Canonical canonical(Point const& x)
{
    Canonical a{};
    for (int i = 0; i < x.dim; ++i)
        a[i] = std::abs(x.c[i]);
    std::sort(a.begin(), a.begin() + x.dim);
    return a;
}

namespace detail {

//---------------------------------------------------------------------------//
/*!
 * e^{-s} I_n(s) for n = 0..nmax by Miller's backward recurrence,
 * normalized with I_0 + 2 sum_{k>=1} I_k = e^s.
 */
inline void scaledBesselI(double s, int nmax, std::vector<double>& out)
{
    out.assign(static_cast<std::size_t>(nmax) + 1, 0.0);
    if (s <= 0.0)
    {
        out[0] = 1.0;
        return;
    }
    int const top = nmax + 25 + static_cast<int>(std::ceil(std::sqrt(80.0 * s)));
    double above = 0.0;
    double cur = 1e-280;
    double sum = 0.0;
    for (int k = top; k >= 1; --k)
    {
        if (k <= nmax)
            out[k] = cur;
        sum += 2.0 * cur;
        double const below = (2.0 * k / s) * cur + above;
        above = cur;
        cur = below;
        if (cur > 1e250)
        {
            constexpr double scale = 1e-250;
            cur *= scale;
            above *= scale;
            sum *= scale;
            for (int j = std::max(k - 1, 0); j <= nmax; ++j)
                out[j] *= scale;
        }
    }
    out[0] = cur;
    sum += cur;
    for (double& v : out)
        v /= sum;
}

inline constexpr int kTailTerms = 12;

/// Coefficients of e^{-s} I_n(s) sqrt(2 pi s) = sum_k c_k s^{-k}.
inline std::array<double, kTailTerms> besselTailSeries(int n)
{
    std::array<double, kTailTerms> c{};
    double const mu = 4.0 * n * n;
    double a = 1.0;
    c[0] = 1.0;
    for (int k = 1; k < kTailTerms; ++k)
    {
        double const odd = 2.0 * k - 1.0;
        a *= (mu - odd * odd) / (8.0 * k);
        c[k] = (k % 2 ? -a : a);
    }
    return c;
}

/// d * int_T^inf prod_j e^{-s} I_{n_j}(s) ds from the 1/s series.
inline double greenTail(int d, std::span<int const> n, double T)
{
    std::array<double, kTailTerms> prod{};
    prod[0] = 1.0;
    for (int j = 0; j < d; ++j)
    {
        auto const c = besselTailSeries(n[j]);
        std::array<double, kTailTerms> next{};
        for (int a = 0; a < kTailTerms; ++a)
            for (int b = 0; a + b < kTailTerms; ++b)
                next[a + b] += prod[a] * c[b];
        prod = next;
    }
    double total = 0.0;
    double const half = 0.5 * d;
    for (int k = 0; k < kTailTerms; ++k)
    {
        double const e = half + k - 1.0;
        total += prod[k] * std::pow(T, -e) / e;
    }
    return d * std::pow(2.0 * std::numbers::pi, -half) * total;
}

/// Gauss-Legendre integral of d prod_j e^{-s} I_{n_j}(s) over [a, b].
inline double greenPanel(int d, std::span<int const> n, double a, double b)
{
    int const nmax = *std::max_element(n.begin(), n.end());
    std::vector<double> bessel;
    auto f = [&](double s) {
        scaledBesselI(s, nmax, bessel);
        double p = 1.0;
        for (int j = 0; j < d; ++j)
            p *= bessel[static_cast<std::size_t>(n[j])];
        return p;
    };
    return d * boost::math::quadrature::gauss<double, 30>::integrate(f, a, b);
}

}  // namespace detail

/*!
 * Green's function by the time integral
 *   G(x) = d int_0^inf prod_j e^{-s} I_{|x_j|}(s) ds
 * with dyadic Gauss-Legendre panels up to T and the asymptotic tail beyond.
 * T is doubled until the estimate changes by less than \p tolerance.
 */
inline double greenTimeIntegral(Point const& x, double tolerance = 1e-10)
{
    int const d = x.dim;
    std::array<int, kMaxDim> n{};
    int nmax = 0;
    for (int j = 0; j < d; ++j)
    {
        n[j] = std::abs(x.c[j]);
        nmax = std::max(nmax, n[j]);
    }
    std::span<int const> ns(n.data(), static_cast<std::size_t>(d));

    double T = 64.0;
    while (T < 16.0 * (nmax * nmax + 1))
        T *= 2.0;

    double body = detail::greenPanel(d, ns, 0.0, 0.5)
                  + detail::greenPanel(d, ns, 0.5, 1.0);
    for (double a = 1.0; a < T; a *= 2.0)
        body += detail::greenPanel(d, ns, a, 2.0 * a);
    double estimate = body + detail::greenTail(d, ns, T);

    for (int iter = 0; iter < 40; ++iter)
    {
        body += detail::greenPanel(d, ns, T, 2.0 * T);
        T *= 2.0;
        double const next = body + detail::greenTail(d, ns, T);
        double const change = std::fabs(next - estimate);
        estimate = next;
        if (change < tolerance)
            return estimate;
    }
    throw NumericError("greenTimeIntegral: tail did not converge for "
                       + to_string(x));
}

/*!
 * Large-|x| expansion of G: Gaussian term with the Edgeworth corrections of
 * relative order |x|^-2 and |x|^-4, integrated over time in closed form.
 * Leading term (d/2) Gamma(d/2 - 1) pi^{-d/2} |x|_2^{2-d}.
 */
inline double greenFarField(Point const& x)
{
    int const d = x.dim;
    constexpr int kOrders = 3;
    constexpr int kPowers = 13;
    using Poly = std::array<std::array<double, kPowers>, kOrders>;

    Poly prod{};
    prod[0][0] = 1.0;
    double r2 = 0.0;
    for (int j = 0; j < d; ++j)
    {
        double const m2 = static_cast<double>(x.c[j]) * x.c[j];
        r2 += m2;
        Poly f{};
        f[0][0] = 1.0;
        f[1][1] = 3.0 / 24;
        f[1][2] = -6.0 * m2 / 24;
        f[1][3] = m2 * m2 / 24;
        f[2][2] = -15.0 / 720 + 105.0 / 1152;
        f[2][3] = (45.0 / 720 - 420.0 / 1152) * m2;
        f[2][4] = (-15.0 / 720 + 210.0 / 1152) * m2 * m2;
        f[2][5] = (1.0 / 720 - 28.0 / 1152) * m2 * m2 * m2;
        f[2][6] = (1.0 / 1152) * m2 * m2 * m2 * m2;

        Poly next{};
        for (int oa = 0; oa < kOrders; ++oa)
            for (int ob = 0; oa + ob < kOrders; ++ob)
                for (int pa = 0; pa < kPowers; ++pa)
                {
                    if (prod[oa][pa] == 0.0)
                        continue;
                    for (int pb = 0; pa + pb < kPowers; ++pb)
                        next[oa + ob][pa + pb] += prod[oa][pa] * f[ob][pb];
                }
        prod = next;
    }
    if (r2 == 0.0)
    {
        throw std::domain_error("greenFarField: undefined at the origin");
    }

    double const half = 0.5 * d;
    double total = 0.0;
    for (int p = 0; p < kPowers; ++p)
    {
        double coeff = 0.0;
        for (int o = 0; o < kOrders; ++o)
            coeff += prod[o][p];
        if (coeff == 0.0)
            continue;
        double const e = half + p - 1.0;
        total += coeff * std::exp(std::lgamma(e) + e * std::log(2.0 / r2));
    }
    return d * std::pow(2.0 * std::numbers::pi, -half) * total;
}

//---------------------------------------------------------------------------//
/*!
 * Green's function of the walk killed on leaving the cube |x|_inf <= R,
 * solved on orbit representatives.
 *
 * Unknowns are indexed by canonical points 0 <= a_1 <= ... <= a_d <= R.
 * Multiplying each orbit equation by the orbit size m(a) makes the reduced
 * operator symmetric, so preconditioned CG applies.
 */
class BoxGreen
{
  public:
    BoxGreen(int d, int radius, double tolerance = 1e-13)
        : lat_{d}, d_{d}, radius_{radius}
    {
        if (radius < 1)
        {
            throw std::invalid_argument("BoxGreen: radius must be >= 1");
        }
        lat_.requireRadius(radius + 1);
        double count = 1.0;
        for (int k = 1; k <= d; ++k)
            count = count * (radius + k) / k;
        if (count > kMaxUnknowns)
        {
            throw std::invalid_argument(
                "BoxGreen: " + std::to_string(count)
                + " orbit unknowns exceed the supported size");
        }
        enumerate();
        solve(tolerance);
    }

    int dim() const { return d_; }
    int radius() const { return radius_; }
    std::size_t unknowns() const { return reps_.size(); }
    int iterations() const { return iterations_; }

    /// Value at x, or 0 outside the cube.
    double operator()(Point const& x) const
    {
        auto const a = canonical(x);
        if (a[d_ - 1] > radius_)
            return 0.0;
        return values_[*index_.find(keyOf(a))];
    }

  private:
    Lattice::Key keyOf(Canonical const& a) const
    {
        Point p(d_);
        std::copy(a.begin(), a.begin() + d_, p.c.begin());
        return lat_.pack(p);
    }

    void enumerate()
    {
        Canonical a{};
        auto rec = [&](auto&& self, int axis, Coord lo) -> void {
            if (axis == d_)
            {
                index_[keyOf(a)] = reps_.size();
                reps_.push_back(a);
                return;
            }
            for (Coord v = lo; v <= radius_; ++v)
            {
                a[axis] = v;
                self(self, axis + 1, v);
            }
            a[axis] = 0;
        };
        rec(rec, 0, 0);

        std::size_t const n = reps_.size();
        weight_.resize(n);
        nbr_.assign(n * 2 * d_, kAbsorbed);
        double fact = 1.0;
        for (int k = 2; k <= d_; ++k)
            fact *= k;
        for (std::size_t i = 0; i < n; ++i)
        {
            auto const& r = reps_[i];
            double m = fact;
            int run = 1;
            for (int j = 0; j < d_; ++j)
            {
                if (r[j] != 0)
                    m *= 2.0;
                if (j > 0 && r[j] == r[j - 1])
                    m /= ++run;
                else
                    run = 1;
            }
            weight_[i] = m;
            for (int j = 0; j < d_; ++j)
            {
                for (int sgn = 0; sgn < 2; ++sgn)
                {
                    Point q(d_);
                    std::copy(r.begin(), r.begin() + d_, q.c.begin());
                    q.c[j] += sgn ? 1 : -1;
                    auto const b = canonical(q);
                    if (b[d_ - 1] > radius_)
                        continue;
                    nbr_[i * 2 * d_ + 2 * j + sgn]
                        = static_cast<std::uint32_t>(*index_.find(keyOf(b)));
                }
            }
        }
    }

    /// y = S x with S = M (I - P).
    void apply(std::vector<double> const& x, std::vector<double>& y) const
    {
        std::size_t const n = reps_.size();
        double const inv = 1.0 / (2.0 * d_);
        for (std::size_t i = 0; i < n; ++i)
        {
            double s = 0.0;
            std::uint32_t const* nb = &nbr_[i * 2 * d_];
            for (int k = 0; k < 2 * d_; ++k)
                if (nb[k] != kAbsorbed)
                    s += x[nb[k]];
            y[i] = weight_[i] * (x[i] - inv * s);
        }
    }

    void solve(double tolerance)
    {
        std::size_t const n = reps_.size();
        std::vector<double> b(n, 0.0);
        b[0] = weight_[0];
        values_.assign(n, 0.0);
        std::vector<double> r = b;
        std::vector<double> z(n);
        std::vector<double> p(n);
        std::vector<double> q(n);
        for (std::size_t i = 0; i < n; ++i)
            z[i] = r[i] / weight_[i];
        p = z;
        double rz = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            rz += r[i] * z[i];

        std::size_t const max_iter = 20 * n + 1000;
        for (iterations_ = 0; static_cast<std::size_t>(iterations_) < max_iter;
             ++iterations_)
        {
            double worst = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                worst = std::max(worst, std::fabs(r[i]) / weight_[i]);
            if (worst < tolerance)
                return;
            apply(p, q);
            double pq = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                pq += p[i] * q[i];
            double const alpha = rz / pq;
            for (std::size_t i = 0; i < n; ++i)
            {
                values_[i] += alpha * p[i];
                r[i] -= alpha * q[i];
                z[i] = r[i] / weight_[i];
            }
            double rz_next = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                rz_next += r[i] * z[i];
            double const beta = rz_next / rz;
            rz = rz_next;
            for (std::size_t i = 0; i < n; ++i)
                p[i] = z[i] + beta * p[i];
        }
        throw NumericError("BoxGreen: CG did not converge (R="
                           + std::to_string(radius_) + ")");
    }

    static constexpr std::uint32_t kAbsorbed = 0xFFFFFFFFu;
    static constexpr double kMaxUnknowns = 4e6;

    Lattice lat_;
    int d_;
    int radius_;
    std::vector<Canonical> reps_;
    PointMap<std::size_t> index_;
    std::vector<double> weight_;
    std::vector<std::uint32_t> nbr_;
    std::vector<double> values_;
    int iterations_ = 0;
};

/*!
 * Richardson combination of two box solutions eliminating the leading
 * R^{-(d-2)} error; defined on the smaller cube.
 */
class ExtrapolatedBoxGreen
{
  public:
    ExtrapolatedBoxGreen(std::shared_ptr<BoxGreen const> small,
                         std::shared_ptr<BoxGreen const> large)
        : small_{std::move(small)}, large_{std::move(large)}
    {
        // Leading error c (R+1)^{-(d-2)}: the walk is absorbed at sup-norm
        // distance R+1.
        double const e = small_->dim() - 2;
        double const hs = std::pow(small_->radius() + 1.0, -e);
        double const hl = std::pow(large_->radius() + 1.0, -e);
        wLarge_ = hs / (hs - hl);
        wSmall_ = -hl / (hs - hl);
    }

    int dim() const { return small_->dim(); }
    int radius() const { return small_->radius(); }

    bool covers(Point const& x) const
    {
        return canonical(x)[dim() - 1] <= radius();
    }

    double operator()(Point const& x) const
    {
        if (!covers(x))
        {
            throw std::domain_error("box Green: " + to_string(x)
                                    + " outside the solved cube");
        }
        return wLarge_ * (*large_)(x) + wSmall_ * (*small_)(x);
    }

    /// |mean over neighbors - G(x)| off the origin, |G(0) - 1 - mean| at it.
    double harmonicResidual(Point const& x) const
    {
        int const d = dim();
        double mean = 0.0;
        for (int j = 0; j < d; ++j)
        {
            for (int sgn : {-1, 1})
            {
                Point y = x;
                y.c[j] += sgn;
                mean += (*this)(y);
            }
        }
        mean /= 2.0 * d;
        double const delta = (x == Point::origin(d)) ? 1.0 : 0.0;
        return std::fabs((*this)(x) - delta - mean);
    }

    BoxGreen const& small() const { return *small_; }
    BoxGreen const& large() const { return *large_; }

  private:
    std::shared_ptr<BoxGreen const> small_;
    std::shared_ptr<BoxGreen const> large_;
    double wLarge_ = 0.0;
    double wSmall_ = 0.0;
};

//---------------------------------------------------------------------------//
// Green oracle
//---------------------------------------------------------------------------//

enum class GreenMethod
{
    time_integral,
    absorbing_box,
};

struct GreenOptions
{
    GreenMethod method = GreenMethod::time_integral;
    /// Increment threshold for the adaptive time horizon.
    double quadTolerance = 1e-10;
    /// Euclidean radius beyond which the far-field expansion is used
    /// (time-integral method); 0 disables it.
    double farFieldRadius = 64.0;
    /// Starting cube radius for the box method (0: 10 for d = 3, else 8).
    int boxRadius = 0;
    /// Largest cube radius tried before giving up.
    int maxBoxRadius = 160;
    /// Stop doubling once extrapolated values change by less than this
    /// (relative).
    double boxTolerance = 1e-6;
    /// Sup-norm radius of the displacements on which the box change is
    /// monitored (0: origin only).
    int boxCheckRadius = 0;
    double cgTolerance = 1e-13;
};

/*!
 * Lattice Green's function G(0, x) with a displacement cache.
 *
 * Lookups take a shared lock; misses compute outside the lock and insert
 * under an exclusive one.
 */
class GreenOracle
{
  public:
    explicit GreenOracle(int d, GreenOptions opt = {}) : lat_{d}, opt_{opt}
    {
        if (!(opt_.quadTolerance > 0.0) || opt_.farFieldRadius < 0.0
            || (opt_.farFieldRadius > 0.0 && opt_.farFieldRadius < 8.0))
        {
            throw std::invalid_argument(
                "GreenOracle: quadTolerance must be > 0 and farFieldRadius "
                "0 or >= 8");
        }
        if (opt_.boxRadius == 0)
            opt_.boxRadius = (d == 3) ? 10 : 8;
        if (opt_.boxRadius < 2 || opt_.maxBoxRadius < opt_.boxRadius
            || !(opt_.boxTolerance > 0.0) || !(opt_.cgTolerance > 0.0)
            || opt_.boxCheckRadius < 0
            || opt_.boxCheckRadius > opt_.boxRadius)
        {
            throw std::invalid_argument(
                "GreenOracle: inconsistent box parameters (need 2 <= "
                "boxRadius <= maxBoxRadius, boxCheckRadius <= boxRadius, "
                "positive tolerances)");
        }
    }

    int dim() const { return lat_.dim(); }
    GreenOptions const& options() const { return opt_; }

    double operator()(Point const& x) const
    {
        if (x.dim != dim())
        {
            throw std::invalid_argument("GreenOracle: point " + to_string(x)
                                        + " has wrong dimension");
        }
        auto const a = canonical(x);
        Point rep(dim());
        std::copy(a.begin(), a.begin() + dim(), rep.c.begin());
        bool const cacheable = a[dim() - 1] <= lat_.maxAbsCoord();
        Lattice::Key key = 0;
        if (cacheable)
        {
            key = lat_.pack(rep);
            std::shared_lock lock(mutex_);
            if (auto const* v = cache_.find(key))
                return *v;
        }
        double const value = compute(rep);
        if (cacheable)
        {
            std::unique_lock lock(mutex_);
            cache_[key] = value;
        }
        return value;
    }

    double green(Point const& x) const { return (*this)(x); }

    /// Extrapolated box solution (box method only; built on first use).
    ExtrapolatedBoxGreen const& box() const
    {
        std::call_once(boxOnce_, [this] { buildBox(); });
        if (!box_)
        {
            throw NumericError(boxError_);
        }
        return *box_;
    }

    /// Last relative change of the box extrapolation (NaN before use).
    double boxChange() const
    {
        box();
        return boxChange_;
    }

  private:
    double compute(Point const& rep) const
    {
        if (opt_.method == GreenMethod::absorbing_box)
        {
            auto const& b = box();
            if (2 * canonical(rep)[dim() - 1] > b.radius())
            {
                throw std::domain_error(
                    "GreenOracle: " + to_string(rep)
                    + " beyond half the box radius "
                    + std::to_string(b.radius()));
            }
            return b(rep);
        }
        if (opt_.farFieldRadius > 0.0 && l2Norm(rep) > opt_.farFieldRadius)
            return greenFarField(rep);
        return greenTimeIntegral(rep, opt_.quadTolerance);
    }

    void buildBox() const
    {
        int const d = dim();
        int R = opt_.boxRadius;
        auto small = std::make_shared<BoxGreen const>(d, R, opt_.cgTolerance);
        auto large
            = std::make_shared<BoxGreen const>(d, 2 * R, opt_.cgTolerance);
        auto current = std::make_unique<ExtrapolatedBoxGreen>(small, large);

        std::vector<Point> check;
        forEachInBall(Ball{Point::origin(d), opt_.boxCheckRadius * d},
                      [&](Point const& p) {
                          auto const a = canonical(p);
                          bool rep = true;
                          for (int j = 0; j < d; ++j)
                              rep = rep && p.c[j] == a[j];
                          if (rep && a[d - 1] <= opt_.boxCheckRadius)
                              check.push_back(p);
                      });

        while (4 * R <= opt_.maxBoxRadius)
        {
            auto larger = std::make_shared<BoxGreen const>(
                d, 4 * R, opt_.cgTolerance);
            auto next = std::make_unique<ExtrapolatedBoxGreen>(large, larger);
            double change = 0.0;
            for (auto const& p : check)
            {
                double const v = (*next)(p);
                change = std::max(change, std::fabs(v - (*current)(p)) / v);
            }
            current = std::move(next);
            large = larger;
            R *= 2;
            boxChange_ = change;
            if (change < opt_.boxTolerance)
            {
                box_ = std::move(current);
                return;
            }
        }
        boxError_ = "GreenOracle: box extrapolation did not reach tolerance "
                    "within maxBoxRadius="
                    + std::to_string(opt_.maxBoxRadius);
    }

    Lattice lat_;
    GreenOptions opt_;
    mutable std::shared_mutex mutex_;
    mutable PointMap<double> cache_;
    mutable std::once_flag boxOnce_;
    mutable std::unique_ptr<ExtrapolatedBoxGreen> box_;
    mutable std::string boxError_;
    mutable double boxChange_ = std::nan("");
};

//---------------------------------------------------------------------------//
// Equilibrium measure and capacity
//---------------------------------------------------------------------------//

inline constexpr std::size_t kMaxEquilibriumSize = 5000;
inline constexpr std::size_t kDenseSolveLimit = 2000;
inline constexpr double kClipTolerance = 1e-12;

/*!
 * Equilibrium data of a finite set K.
 *
 * Only inner-boundary points (those with a neighbor outside K) can carry
 * equilibrium mass, so the linear system sum_y G(x - y) e(y) = 1 is solved
 * on that support; greenSub is the Green matrix restricted to it.
 */
struct PotentialTable
{
    int d = 0;
    std::vector<Point> K;
    std::vector<double> eq;
    std::vector<double> normEq;
    double cap = 0.0;
    std::vector<std::size_t> support;
    Eigen::MatrixXd greenSub;
    std::string solver;
    /// Max |sum_y G(x-y) e(y) - 1| over all of K (NaN if not evaluated).
    double residual = std::nan("");
    double conditionEstimate = 0.0;
    std::vector<std::string> warnings;

    std::size_t size() const { return K.size(); }

    std::ptrdiff_t indexOf(Point const& x) const
    {
        auto const it = std::lower_bound(K.begin(), K.end(), x);
        if (it == K.end() || !(*it == x))
            return -1;
        return it - K.begin();
    }
    bool contains(Point const& x) const { return indexOf(x) >= 0; }
    double eqAt(Point const& x) const
    {
        auto const i = indexOf(x);
        return i < 0 ? 0.0 : eq[static_cast<std::size_t>(i)];
    }
    double normEqAt(Point const& x) const
    {
        auto const i = indexOf(x);
        return i < 0 ? 0.0 : normEq[static_cast<std::size_t>(i)];
    }
};

namespace detail {
/// Points of K with a lattice neighbor outside K.
inline std::vector<std::size_t> innerBoundary(std::vector<Point> const& K)
{
    std::vector<std::size_t> out;
    auto const d = K.front().dim;
    for (std::size_t i = 0; i < K.size(); ++i)
    {
        bool boundary = false;
        for (int j = 0; j < d && !boundary; ++j)
        {
            for (int sgn : {-1, 1})
            {
                Point y = K[i];
                y.c[j] += sgn;
                if (!std::binary_search(K.begin(), K.end(), y))
                {
                    boundary = true;
                    break;
                }
            }
        }
        if (boundary)
            out.push_back(i);
    }
    return out;
}
}  // namespace detail

inline PotentialTable equilibrium(std::span<Point const> points,
                                  GreenOracle const& green)
{
    if (points.empty())
    {
        throw std::invalid_argument("equilibrium: empty set");
    }
    PotentialTable t;
    t.d = green.dim();
    t.K.assign(points.begin(), points.end());
    for (auto const& p : t.K)
    {
        if (p.dim != t.d)
        {
            throw std::invalid_argument("equilibrium: point " + to_string(p)
                                        + " has wrong dimension");
        }
    }
    std::sort(t.K.begin(), t.K.end());
    t.K.erase(std::unique(t.K.begin(), t.K.end()), t.K.end());
    if (t.K.size() > kMaxEquilibriumSize)
    {
        throw std::invalid_argument(
            "equilibrium: |K| = " + std::to_string(t.K.size())
            + " exceeds the supported size 5000");
    }
    t.support = detail::innerBoundary(t.K);
    auto const n = static_cast<Eigen::Index>(t.support.size());

    t.greenSub.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        for (Eigen::Index j = 0; j <= i; ++j)
        {
            double const g = green(t.K[t.support[i]] - t.K[t.support[j]]);
            t.greenSub(i, j) = g;
            t.greenSub(j, i) = g;
        }
    }

    Eigen::VectorXd const ones = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd e;
    if (t.support.size() <= kDenseSolveLimit)
    {
        t.solver = "dense-llt";
        Eigen::LLT<Eigen::MatrixXd> llt(t.greenSub);
        if (llt.info() != Eigen::Success)
        {
            throw NumericError("equilibrium: Green matrix not positive "
                               "definite");
        }
        Eigen::VectorXd const diag = llt.matrixLLT().diagonal();
        double const ratio = diag.maxCoeff() / diag.minCoeff();
        t.conditionEstimate = ratio * ratio;
        e = llt.solve(ones);
    }
    else
    {
        t.solver = "cg";
        Eigen::ConjugateGradient<Eigen::MatrixXd, Eigen::Lower | Eigen::Upper>
            cg;
        cg.setTolerance(1e-13);
        cg.compute(t.greenSub);
        e = cg.solve(ones);
        if (cg.info() != Eigen::Success)
        {
            throw NumericError("equilibrium: CG failed to converge");
        }
        t.conditionEstimate = std::nan("");
    }
    if (t.conditionEstimate > 1e10)
    {
        t.warnings.push_back("Green matrix condition estimate "
                             + std::to_string(t.conditionEstimate));
    }

    t.eq.assign(t.K.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        double v = e[i];
        if (v < 0.0)
        {
            if (v < -kClipTolerance)
            {
                throw NumericError("equilibrium: negative mass "
                                   + std::to_string(v) + " at "
                                   + to_string(t.K[t.support[i]]));
            }
            v = 0.0;
        }
        if (v > 1.0)
        {
            if (v > 1.0 + kClipTolerance)
            {
                throw NumericError("equilibrium: mass above 1 at "
                                   + to_string(t.K[t.support[i]]));
            }
            v = 1.0;
        }
        t.eq[t.support[i]] = v;
    }
    for (double v : t.eq)
        t.cap += v;
    t.normEq.resize(t.K.size());
    for (std::size_t i = 0; i < t.K.size(); ++i)
        t.normEq[i] = t.eq[i] / t.cap;

    if (t.K.size() * t.support.size() <= 20'000'000)
    {
        double worst = 0.0;
        for (auto const& x : t.K)
        {
            double s = 0.0;
            for (std::size_t j : t.support)
                s += green(x - t.K[j]) * t.eq[j];
            worst = std::max(worst, std::fabs(s - 1.0));
        }
        t.residual = worst;
        if (worst > 1e-8)
        {
            t.warnings.push_back("equilibrium residual "
                                 + std::to_string(worst));
        }
    }
    return t;
}

inline double capacity(std::span<Point const> K, GreenOracle const& green)
{
    return equilibrium(K, green).cap;
}

/// P_x[H_K < inf] = sum_y G(x - y) e_K(y); 1 on K.
inline double
hitProb(Point const& x, PotentialTable const& t, GreenOracle const& green)
{
    if (t.contains(x))
        return 1.0;
    double s = 0.0;
    for (std::size_t j : t.support)
        s += green(x - t.K[j]) * t.eq[j];
    if (s > 1.0 + 1e-9)
    {
        throw NumericError("hitProb: value " + std::to_string(s)
                           + " exceeds 1");
    }
    return std::clamp(s, 0.0, 1.0);
}

inline double hitProb(Point const& x,
                      std::span<Point const> K,
                      GreenOracle const& green)
{
    return hitProb(x, equilibrium(K, green), green);
}

/*!
 * Bound on the probability that a walk returns to K after leaving the l1
 * ball \p escape: cap(K) times G at the smallest Euclidean distance from
 * the escape boundary to K.
 */
inline double truncationReturnBound(double cap,
                                    double rmax,
                                    double rmaxL1,
                                    GreenOracle const& green,
                                    Ball const& escape)
{
    int const d = green.dim();
    double const sqrt_d = std::sqrt(static_cast<double>(d));
    double const outside = static_cast<double>(escape.radius) + 1.0;
    // Euclidean gap between the exit sphere and K, two ways.
    double const rmin
        = std::max(outside / sqrt_d - rmax, (outside - rmaxL1) / sqrt_d);
    if (rmin < 1.0)
        return 1.0;
    auto const r = static_cast<Coord>(std::floor(rmin));
    return std::min(1.0, cap * green(Point::unit(d, 0, r)));
}

inline double truncationReturnBound(double cap,
                                    std::span<Point const> K,
                                    GreenOracle const& green,
                                    Ball const& escape)
{
    double rmax = 0.0;
    double rmax_l1 = 0.0;
    for (auto const& z : K)
    {
        rmax = std::max(rmax, l2Norm(z - escape.center));
        rmax_l1 = std::max(rmax_l1,
                           static_cast<double>(l1Dist(z, escape.center)));
    }
    return truncationReturnBound(cap, rmax, rmax_l1, green, escape);
}

inline double truncationReturnBound(PotentialTable const& t,
                                    GreenOracle const& green,
                                    Ball const& escape)
{
    return truncationReturnBound(t.cap, t.K, green, escape);
}

}  // namespace ri
