#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

namespace coverhead {

// exp(x) with relative error below ~5e-16. The training loop evaluates a
// logistic per species per pixel, so this sits on the hot path; libm exp is
// noticeably slower on the glibc builds we target.
//
// Argument reduction x = k*ln2 + r with |r| <= ln2/2 (two-part ln2 keeps the
// reduction exact for |x| < 1024), degree-12 Taylor polynomial in r, and the
// 2^k scale applied through the exponent bits.

// Branch-free core. Requires |x| <= 746; the public wrapper handles the rest.
// No early exits, so loops over a few values vectorize.
inline double fast_exp_core(double x) {
    constexpr double inv_ln2 = 1.4426950408889634074;
    constexpr double ln2_hi = 6.93147180369123816490e-01;
    constexpr double ln2_lo = 1.90821492927058770002e-10;

    const double kd = std::nearbyint(x * inv_ln2);
    const auto k = static_cast<long>(kd);
    const double r = (x - kd * ln2_hi) - kd * ln2_lo;

    // Taylor series of exp(r); |r| <= 0.34658 keeps the truncation below 1 ulp.
    double p = 1.0 / 6227020800.0;           // 1/13!
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;

    // Scale by 2^k. Split the scale in two so k down to -1074 (subnormal
    // results) and up to +1023 stay representable at every step.
    const long k1 = k / 2;
    const long k2 = k - k1;
    const double s1 = std::bit_cast<double>(static_cast<std::uint64_t>(1023 + k1) << 52);
    const double s2 = std::bit_cast<double>(static_cast<std::uint64_t>(1023 + k2) << 52);
    return (p * s1) * s2;
}

inline double fast_exp(double x) {
    if (!(x > -708.4)) {                     // also catches NaN (propagated below)
        return x != x ? x : 0.0;
    }
    if (x > 709.78) {
        return std::numeric_limits<double>::infinity();
    }
    return fast_exp_core(x);
}

// Numerically stable logistic, range (0,1) up to underflow. Branch free
// after clamping: e stays finite, and e/(1+e) is accurate at both tails
// (it reduces to e for small e and rounds to 1 beyond s = 40).
inline double logistic(double s) {
    if (s != s) {
        return s;  // keep NaN out of the no-branch core's integer cast
    }
    const double t = s < -745.0 ? -745.0 : (s > 40.0 ? 40.0 : s);
    const double e = fast_exp_core(t);
    return e / (1.0 + e);
}

// softplus(x) = log(1 + e^x), strictly positive, used to reparametrize kappa.
inline double softplus(double x) {
    if (x > 36.0) {
        return x;                            // 1 + e^x == e^x at double precision
    }
    if (x < -36.0) {
        return fast_exp(x);
    }
    return std::log1p(fast_exp(x));
}

// d softplus / dx = logistic(x)
inline double softplus_grad(double x) {
    return logistic(x);
}

// Inverse of softplus for positive y; handy when tests pin kappa directly.
inline double softplus_inverse(double y) {
    if (y > 36.0) {
        return y;
    }
    return std::log(std::expm1(y));
}

} // namespace coverhead
