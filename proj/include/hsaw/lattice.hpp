#pragma once

#include <array>
#include <cstdint>
#include <cmath>
#include <compare>
#include <string>

#include "hsaw/errors.hpp"

namespace hsaw {

// The lattice is the countable direct sum of copies of Z_n with n = L^4.
// A point is a digit string (x_0, x_1, x_2, ...), almost all digits zero,
// and carries the ultrametric norm |x| = L^N where N-1 is the index of the
// highest nonzero digit (|0| = 0).  Jumps from x to y occur at rate
// C |x-y|^-6, which makes the walk diffusive on the |x| ~ sqrt(T) scale in
// this four-dimensional-like setting.

struct LatticeParams {
    int L = 2;          // hierarchy base, L >= 2
    std::int64_t n = 16; // block size L^4
    double B = 0.0;     // 1 - L^-4, the volume factor of a level-1 shell
    double C = 0.0;     // jump-rate constant, fixed by the large-beta
                        // normalization beta^2 G(beta,x)|x|^6 -> C
    double gamma = 0.0; // total jump rate out of a site

    static LatticeParams make(int L);
};

inline LatticeParams LatticeParams::make(int L)
{
    if (L < 2) throw std::invalid_argument("LatticeParams: L must be >= 2");
    LatticeParams p;
    p.L = L;
    p.n = 1;
    for (int i = 0; i < 4; ++i) p.n *= L;
    const double Lm2 = 1.0 / (static_cast<double>(L) * L);
    p.B = 1.0 - Lm2 * Lm2;
    p.C = (1.0 - Lm2) / (1.0 - Lm2 * Lm2 * Lm2) / Lm2;
    // gamma = C * sum_{N>=1} shell_count(N) L^-6N, summed in closed form:
    // shell_count(N) L^-6N = (1 - L^-4) L^-2N.
    p.gamma = p.C * p.B * Lm2 / (1.0 - Lm2);
    return p;
}

// Number of sites at ultrametric distance exactly L^N from a fixed point.
// Returned as double: the count (n-1) n^(N-1) overflows 64-bit integers for
// deep shells long before it stops being exactly representable in practice.
inline double shell_count(int N, const LatticeParams& p)
{
    if (N < 1) throw std::invalid_argument("shell_count: N must be >= 1");
    double c = static_cast<double>(p.n - 1);
    for (int i = 1; i < N; ++i) c *= static_cast<double>(p.n);
    return c;
}

class Site {
public:
    static constexpr int kCapacity = 64;
    using digit_t = std::uint32_t;

    Site() { digits_.fill(0); }

    int level() const { return level_; }
    digit_t digit(int i) const { return digits_[static_cast<std::size_t>(i)]; }

    bool is_zero() const { return level_ == 0; }

    void set_digit(int i, digit_t v)
    {
        if (i < 0 || i >= kCapacity)
            throw DepthOverflowError("Site::set_digit: index beyond digit capacity");
        digits_[static_cast<std::size_t>(i)] = v;
        if (v != 0 && i + 1 > level_) level_ = i + 1;
        else if (v == 0 && i + 1 == level_) retrim();
    }

    // Group addition: digit-wise sum mod n.  No carries; the hierarchy levels
    // interact only through the norm.
    Site add(const Site& o, const LatticeParams& p) const
    {
        Site r;
        const int top = level_ > o.level_ ? level_ : o.level_;
        for (int i = 0; i < top; ++i) {
            const auto s = (digits_[static_cast<std::size_t>(i)] +
                            o.digits_[static_cast<std::size_t>(i)]) %
                           static_cast<digit_t>(p.n);
            r.digits_[static_cast<std::size_t>(i)] = s;
        }
        r.level_ = top;
        r.retrim();
        return r;
    }

    Site negate(const LatticeParams& p) const
    {
        Site r;
        for (int i = 0; i < level_; ++i) {
            const auto d = digits_[static_cast<std::size_t>(i)];
            r.digits_[static_cast<std::size_t>(i)] =
                d == 0 ? 0 : static_cast<digit_t>(p.n) - d;
        }
        r.level_ = level_;
        return r;
    }

    Site sub(const Site& o, const LatticeParams& p) const { return add(o.negate(p), p); }

    // |x| = L^level, |0| = 0.  Exact for L = 2 over the whole digit range.
    double norm(const LatticeParams& p) const
    {
        if (level_ == 0) return 0.0;
        double v = 1.0;
        for (int i = 0; i < level_; ++i) v *= static_cast<double>(p.L);
        return v;
    }

    // Drop the least significant digit; maps the shell at L^N onto the shell
    // at L^(N-1) (and the level-1 shell onto 0).
    Site scale_down() const
    {
        Site r;
        for (int i = 1; i < level_; ++i)
            r.digits_[static_cast<std::size_t>(i - 1)] = digits_[static_cast<std::size_t>(i)];
        r.level_ = level_ > 0 ? level_ - 1 : 0;
        r.retrim();
        return r;
    }

    bool operator==(const Site& o) const
    {
        if (level_ != o.level_) return false;
        for (int i = 0; i < level_; ++i)
            if (digits_[static_cast<std::size_t>(i)] != o.digits_[static_cast<std::size_t>(i)])
                return false;
        return true;
    }

    // Lexicographic order on digit strings, most significant digit first.
    // With trailing zeros implicit, a site of higher level always compares
    // greater, so the level is a valid first key.
    std::strong_ordering operator<=>(const Site& o) const
    {
        if (level_ != o.level_) return level_ <=> o.level_;
        for (int i = level_ - 1; i >= 0; --i) {
            const auto a = digits_[static_cast<std::size_t>(i)];
            const auto b = o.digits_[static_cast<std::size_t>(i)];
            if (a != b) return a <=> b;
        }
        return std::strong_ordering::equal;
    }

    std::string to_string() const
    {
        if (level_ == 0) return "0";
        std::string s;
        for (int i = level_ - 1; i >= 0; --i) {
            s += std::to_string(digits_[static_cast<std::size_t>(i)]);
            if (i > 0) s += '.';
        }
        return s;
    }

private:
    void retrim()
    {
        while (level_ > 0 && digits_[static_cast<std::size_t>(level_ - 1)] == 0) --level_;
    }

    std::array<digit_t, kCapacity> digits_{};
    int level_ = 0;
};

inline double distance(const Site& x, const Site& y, const LatticeParams& p)
{
    return x.sub(y, p).norm(p);
}

// Unbiased uniform draw from {0, ..., m-1} using 64-bit rejection.
template <typename Rng>
inline std::uint64_t draw_uniform(Rng& rng, std::uint64_t m)
{
    const std::uint64_t bound = (~std::uint64_t{0}) - (~std::uint64_t{0}) % m;
    std::uint64_t v = rng();
    while (v >= bound) v = rng();
    return v % m;
}

// Uniform site on the shell {x : |x| = L^N}: free digits below the top,
// nonzero digit at index N-1.  All (n-1) n^(N-1) shell sites are equally
// likely.
template <typename Rng>
inline Site sample_shell(int N, const LatticeParams& p, Rng& rng)
{
    if (N < 1) throw std::invalid_argument("sample_shell: N must be >= 1");
    if (N > Site::kCapacity)
        throw DepthOverflowError("sample_shell: level beyond digit capacity");
    Site s;
    const auto n = static_cast<std::uint64_t>(p.n);
    s.set_digit(N - 1, static_cast<Site::digit_t>(1 + draw_uniform(rng, n - 1)));
    for (int i = 0; i < N - 1; ++i)
        s.set_digit(i, static_cast<Site::digit_t>(draw_uniform(rng, n)));
    return s;
}

} // namespace hsaw
