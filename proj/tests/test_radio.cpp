#include "cbsim/radio.hpp"

#include <doctest.h>

#include <cmath>

using namespace cbsim;
using namespace cbsim::radio;

namespace {

// Straight evaluation of floor(rb * 12 * symbols * (1 - overhead) * se / 8) in long double.
long long tbs_oracle(double se, int rbs, int symbols, long double overhead)
{
  const long double bits = static_cast<long double>(rbs) * 12 * symbols * (1.0L - overhead) * static_cast<long double>(se);
  return static_cast<long long>(std::floor(bits / 8.0L + 1e-9L));
}

} // namespace

TEST_CASE("numerology of the default carrier")
{
  RadioConfig cfg;
  const auto  g = derive_grid(cfg);
  CHECK(g.num_rbs == 112);
  CHECK(g.slot_duration_s == doctest::Approx(0.0005).epsilon(1e-15));

  cfg.subcarrier_spacing_hz = 15e3;
  CHECK(derive_grid(cfg).slot_duration_s == doctest::Approx(0.001));
  cfg.subcarrier_spacing_hz = 120e3;
  CHECK(derive_grid(cfg).slot_duration_s == doctest::Approx(0.000125));
}

TEST_CASE("grid errors")
{
  RadioConfig cfg;
  cfg.subcarrier_spacing_hz = 25e3;
  CHECK_THROWS_AS(derive_grid(cfg), radio_error);
  try {
    derive_grid(cfg);
  } catch (const radio_error& e) {
    CHECK(e.code() == radio_errc::invalid_numerology);
  }

  cfg                       = {};
  cfg.system_bandwidth_hz   = 300e3; // narrower than 12 x 30 kHz
  try {
    derive_grid(cfg);
    FAIL("expected bandwidth_too_small");
  } catch (const radio_error& e) {
    CHECK(e.code() == radio_errc::bandwidth_too_small);
  }
}

TEST_CASE("MCS table is monotone and spans the configured range")
{
  const auto& t = McsTable::standard();
  REQUIRE(t.size() == 28);
  CHECK(t.at(0).spectral_efficiency == doctest::Approx(0.15));
  CHECK(t.at(27).spectral_efficiency == doctest::Approx(5.5));
  CHECK(t.at(0).min_sinr_db == doctest::Approx(-6.0));
  CHECK(t.at(27).min_sinr_db == doctest::Approx(22.0));
  for (int i = 1; i < t.size(); ++i) {
    CHECK(t.at(i).spectral_efficiency > t.at(i - 1).spectral_efficiency);
    CHECK(t.at(i).min_sinr_db > t.at(i - 1).min_sinr_db);
  }
  CHECK_THROWS_AS(t.at(28), radio_error);
  CHECK_THROWS_AS(t.at(-1), radio_error);

  CHECK(t.highest_for_sinr(-100.0) == 0);
  CHECK(t.highest_for_sinr(100.0) == 27);
  CHECK(t.highest_for_sinr(t.at(13).min_sinr_db) == 13);
}

TEST_CASE("transport block size")
{
  // A spectral efficiency of 0.2 on one RB: floor(1*12*14*(6/7)*0.2/8) = floor(3.6).
  CHECK(tbs_oracle(0.2, 1, 14, 1.0L / 7.0L) == 3);

  const auto& t = McsTable::standard();
  for (int m = 0; m < t.size(); ++m) {
    for (int r = 1; r <= 112; ++r) {
      const int got = tbs_bytes(m, r);
      REQUIRE(got == tbs_oracle(t.at(m).spectral_efficiency, r, 14, 1.0L / 7.0L));
      if (2 * r <= 224) {
        const int twice = tbs_bytes(m, 2 * r);
        CHECK((twice == 2 * got || twice == 2 * got + 1));
      }
    }
    CHECK(tbs_bytes(m, 10, 7) <= tbs_bytes(m, 10, 14));
  }
  CHECK_THROWS_AS(tbs_bytes(3, 0), radio_error);
  CHECK_THROWS_AS(tbs_bytes(3, 1, 15), radio_error);
  CHECK_THROWS_AS(tbs_bytes(28, 1), radio_error);
}

TEST_CASE("smallest RB count for a payload")
{
  for (int m : {0, 7, 19, 27}) {
    for (int bytes : {1, 3, 64, 67, 1500, 9000}) {
      const auto r = rbs_for_bytes(m, bytes, 112);
      if (tbs_bytes(m, 112) < bytes) {
        CHECK_FALSE(r);
        continue;
      }
      REQUIRE(r);
      CHECK(tbs_bytes(m, *r) >= bytes);
      if (*r > 1) {
        CHECK(tbs_bytes(m, *r - 1) < bytes);
      }
    }
  }
  CHECK_FALSE(rbs_for_bytes(0, 1'000'000, 112));
  CHECK(rbs_for_bytes(5, 0, 112) == 1);
}

TEST_CASE("resource grid allocation")
{
  ResourceGrid g(7, 112);
  auto         full = g.allocate(112, 14, 5, GrantKind::dedicated, GrantTarget::single(1), 1);
  REQUIRE(full);
  CHECK(full->rb_start == 0);
  CHECK(full->slot_index == 7);
  CHECK(grant_is_well_formed(*full, 112));
  CHECK(g.free_rbs() == 0);
  CHECK_FALSE(g.allocate(1, 14, 5, GrantKind::dedicated, GrantTarget::single(2), 2));

  ResourceGrid h(0, 112);
  REQUIRE(h.allocate(100, 14, 5, GrantKind::dedicated, GrantTarget::single(1), 1));
  CHECK_FALSE(h.allocate(20, 14, 5, GrantKind::dedicated, GrantTarget::single(2), 2));
  auto rest = h.allocate(12, 14, 5, GrantKind::contention_based, GrantTarget::set(1), 3);
  REQUIRE(rest);
  CHECK(rest->rb_start == 100);
  CHECK(rest->target.is_set());
  CHECK(h.granted_rbs() == 112);
}

TEST_CASE("grants never overlap")
{
  // Random allocation sequences: occupancy equals the sum of granted spans and spans are disjoint.
  std::uint64_t state = 12345;
  auto          next  = [&] {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<int>((state >> 33) % 40) + 1;
  };
  for (int trial = 0; trial < 200; ++trial) {
    ResourceGrid       g(trial, 112);
    std::vector<Grant> out;
    for (int k = 0; k < 12; ++k) {
      if (auto a = g.allocate(next(), 14, 0, GrantKind::dedicated, GrantTarget::single(static_cast<UeId>(k)), k)) {
        out.push_back(*a);
      }
    }
    int sum = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      sum += out[i].rb_count;
      for (std::size_t j = i + 1; j < out.size(); ++j) {
        const bool disjoint = out[i].rb_start + out[i].rb_count <= out[j].rb_start ||
                              out[j].rb_start + out[j].rb_count <= out[i].rb_start;
        CHECK(disjoint);
      }
    }
    CHECK(sum == g.occupied_rbs());
    CHECK(sum <= 112);
  }
}
