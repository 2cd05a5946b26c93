#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace cbsim {

constexpr std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named substreams split off one master seed. Each consumer draws from its own stream so that,
/// for example, changing the scheduling policy leaves the deployment draws untouched.
enum class Stream : std::uint64_t {
  deployment = 1,
  shadowing  = 2,
  backoff    = 3,
  traffic    = 4,
};

constexpr std::uint64_t substream_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0)
{
  return splitmix64(splitmix64(master ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL)) + index);
}

inline std::mt19937_64 make_engine(std::uint64_t master, Stream stream, std::uint64_t index = 0)
{
  return std::mt19937_64(substream_seed(master, stream, index));
}

/// Uniform in (0, 1) from 64 random bits.
constexpr double bits_to_open_unit(std::uint64_t bits)
{
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal draw that is a pure function of (key, a, b): a counter-based stream, so the value for
/// one (UE, slot) never depends on how many other draws happened before it.
inline double counter_normal(std::uint64_t key, std::uint64_t a, std::uint64_t b)
{
  const std::uint64_t h  = splitmix64(key ^ splitmix64(a * 0x9e3779b97f4a7c15ULL + splitmix64(b)));
  const double        u1 = bits_to_open_unit(h);
  const double        u2 = bits_to_open_unit(splitmix64(h));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace cbsim
