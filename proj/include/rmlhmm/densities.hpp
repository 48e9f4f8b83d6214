#ifndef RMLHMM_DENSITIES_HPP_INCLUDED
#define RMLHMM_DENSITIES_HPP_INCLUDED

#include <cmath>
#include <numbers>
#include <string>

#include "errors.hpp"
#include "rng.hpp"

namespace rmlhmm
{
/// A fixed, fully specified one-dimensional density from the mixture catalog.
///
/// Shapes and their parameters:
///  - Gaussian:    (mean, sd)
///  - Uniform:     (lo, hi)
///  - TruncatedExponential: (rate, lo, hi), density rate·exp(-rate(y-lo)) renormalized on [lo, hi]
struct Component
{
    enum class Shape
    {
        Gaussian,
        Uniform,
        TruncatedExponential
    };

    Shape shape = Shape::Gaussian;
    double a    = 0.0;
    double b    = 1.0;
    double c    = 0.0;

    static Component gaussian(double mean, double sd) { return {Shape::Gaussian, mean, sd, 0.0}; }
    static Component uniform(double lo, double hi) { return {Shape::Uniform, lo, hi, 0.0}; }
    static Component truncated_exponential(double rate, double lo, double hi)
    {
        return {Shape::TruncatedExponential, rate, lo, hi};
    }

    void validate() const
    {
        switch (shape)
        {
        case Shape::Gaussian:
            if (!(b > 0.0))
                throw ValidationError("gaussian component needs sd > 0");
            break;
        case Shape::Uniform:
            if (!(a < b))
                throw ValidationError("uniform component needs lo < hi");
            break;
        case Shape::TruncatedExponential:
            if (!(a > 0.0) || !(b < c))
                throw ValidationError("truncated exponential component needs rate > 0 and lo < hi");
            break;
        }
    }

    double density(double y) const
    {
        switch (shape)
        {
        case Shape::Gaussian:
        {
            double z = (y - a) / b;
            return std::exp(-0.5 * z * z) / (b * std::sqrt(2.0 * std::numbers::pi));
        }
        case Shape::Uniform:
            return (y >= a && y <= b) ? 1.0 / (b - a) : 0.0;
        case Shape::TruncatedExponential:
            if (y < b || y > c)
                return 0.0;
            return a * std::exp(-a * (y - b)) / -std::expm1(-a * (c - b));
        }
        return 0.0;
    }

    double sample(Rng& rng) const
    {
        switch (shape)
        {
        case Shape::Gaussian:
            return a + b * rng.normal();
        case Shape::Uniform:
            return rng.uniform(a, b);
        case Shape::TruncatedExponential:
        {
            // inverse CDF on [lo, hi]
            double u = rng.uniform();
            return b - std::log1p(u * std::expm1(-a * (c - b))) / a;
        }
        }
        return 0.0;
    }
};

inline std::string to_string(Component::Shape s)
{
    switch (s)
    {
    case Component::Shape::Gaussian:
        return "gaussian";
    case Component::Shape::Uniform:
        return "uniform";
    case Component::Shape::TruncatedExponential:
        return "truncated_exponential";
    }
    return "?";
}

} // namespace rmlhmm

#endif // RMLHMM_DENSITIES_HPP_INCLUDED
