#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "topdown/common.hpp"

namespace topdown {

struct ArchSpec;  // arch.hpp

// Exact rational arithmetic so receptive-field identities hold by equality,
// not by tolerance.
struct Rational {
    long long num = 0;
    long long den = 1;

    Rational() = default;
    Rational(long long n) : num(n), den(1) {}
    Rational(long long n, long long d) : num(n), den(d) { normalize(); }

    void normalize() {
        if (den == 0) throw std::invalid_argument("Rational: zero denominator");
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    Rational operator+(const Rational& o) const { return {num * o.den + o.num * den, den * o.den}; }
    Rational operator-(const Rational& o) const { return {num * o.den - o.num * den, den * o.den}; }
    Rational operator*(const Rational& o) const { return {num * o.num, den * o.den}; }
    bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
    bool operator!=(const Rational& o) const { return !(*this == o); }
    bool operator<(const Rational& o) const { return num * o.den < o.num * den; }
    bool is_integer() const { return den == 1; }
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const {
        return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
    }
};

// Affine expression a + b*sigma describing a receptive field that may depend
// on the blur width symbolically.
struct SigmaAffine {
    Rational a;  // constant part
    Rational b;  // sigma coefficient

    SigmaAffine() = default;
    SigmaAffine(Rational constant) : a(constant), b(0) {}
    SigmaAffine(Rational constant, Rational sigma_coeff) : a(constant), b(sigma_coeff) {}

    SigmaAffine operator+(const SigmaAffine& o) const { return {a + o.a, b + o.b}; }
    SigmaAffine operator*(const Rational& r) const { return {a * r, b * r}; }
    bool operator==(const SigmaAffine& o) const { return a == o.a && b == o.b; }
    bool operator!=(const SigmaAffine& o) const { return !(*this == o); }
    bool depends_on_sigma() const { return b != Rational(0); }

    Rational eval(const Rational& sigma) const { return a + b * sigma; }

    std::string str() const {
        if (!depends_on_sigma()) return a.str();
        std::string s = b.str() + "s";  // "s" = sigma
        if (a != Rational(0)) s += "+" + a.str();
        return s;
    }
};

// Receptive-field recurrence state: r in input pixels, m the cumulative
// stride. Initial state is (1, 1). Fractional m arises from upsampling.
struct ErfState {
    SigmaAffine r = SigmaAffine(Rational(1));
    Rational m = Rational(1);
};

// One recurrence step for a sliding window of extent k and stride s:
//   r' = r + (k - 1) * m;  m' = m * s.
ErfState erf_step(const ErfState& state, int k, int s);

// Symbolic step: window extent given as an affine function of sigma (a blur
// contributes k = 6*sigma + 1), stride as an exact rational (an upsample is
// a k=2 window of stride 1/2).
ErfState erf_step_sym(const ErfState& state, const SigmaAffine& k, const Rational& s);

// A set-valued state for paths through merges/branches: all members share
// the cumulative stride; a window step grows every member.
struct ErfSet {
    std::vector<SigmaAffine> rs;
    Rational m = Rational(1);
};

ErfSet erf_set_step(const ErfSet& s, const SigmaAffine& k, const Rational& stride);
ErfSet erf_set_union(const ErfSet& a, const ErfSet& b);  // m must agree

// Report row: layer label, receptive-field set (singleton for chains), and
// cumulative stride after the layer.
struct ErfRow {
    std::string layer;
    std::vector<SigmaAffine> rs;
    Rational m;
};

// Per-layer receptive field table for an architecture. For multi-input
// (top-down) specs, each pyramid branch is modeled by the documented
// reconstruction — per octave a stride-2 window (k=2) followed by a blur
// window (k = 6*sigma + 1) at the reduced resolution — and merge points
// carry the set union of both paths. The reconstruction choice is flagged
// in the emitted report header.
std::vector<ErfRow> erf_report(const ArchSpec& spec);

// Pretty-print helpers used by the CLI (aligned text / CSV rows).
std::string erf_table_text(const std::vector<ErfRow>& rows);

}  // namespace topdown
