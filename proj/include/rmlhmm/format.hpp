#ifndef RMLHMM_FORMAT_HPP_INCLUDED
#define RMLHMM_FORMAT_HPP_INCLUDED

#include <cstdio>
#include <string>

namespace rmlhmm
{
/// Shortest-safe round-trip text for a double: 17 significant digits.
inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace rmlhmm

#endif // RMLHMM_FORMAT_HPP_INCLUDED
