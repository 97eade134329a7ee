#include "cfmon/scenario.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace cfmon;
using Catch::Approx;

TEST_CASE("noise power at defaults", "[scenario]") {
  SystemParams p;
  // -174 dBm/Hz reference with k = 1.381e-23, T = 290 K, plus 73 dB bandwidth and 9 dB NF.
  const double ktb_dbm = 10.0 * std::log10(1.381e-23 * 290.0 * 1000.0) + 10.0 * std::log10(20e6) + 9.0;
  const double oracle_w = std::pow(10.0, ktb_dbm / 10.0) / 1000.0;
  CHECK(noise_power(p) == Approx(oracle_w).epsilon(1e-12));
  CHECK(noise_power(p) == Approx(6.36e-13).epsilon(2e-3));
}

TEST_CASE("Hata constant at defaults", "[scenario]") {
  SystemParams p;
  CHECK(hata_constant_db(p) == Approx(140.7).margin(0.05));
}

TEST_CASE("three-slope path loss", "[scenario]") {
  SystemParams p;
  const double L = hata_constant_db(p);
  CHECK(path_loss_db(1000.0, p) == Approx(-L).margin(1e-12));
  CHECK(path_loss_db(2000.0, p) == Approx(-L - 35.0 * std::log10(2.0)).margin(1e-12));

  SECTION("continuous at both breakpoints") {
    for (double d : {p.d0_m, p.d1_m}) {
      CHECK(path_loss_db(d * (1 - 1e-9), p) == Approx(path_loss_db(d * (1 + 1e-9), p)).margin(1e-6));
    }
  }
  SECTION("flat inside d0") { CHECK(path_loss_db(1.0, p) == path_loss_db(p.d0_m, p)); }
  SECTION("non-increasing in distance") {
    double prev = path_loss_db(0.5, p);
    for (double d = 1.0; d < 5000.0; d *= 1.1) {
      const double v = path_loss_db(d, p);
      CHECK(v <= prev + 1e-12);
      prev = v;
    }
  }
  SECTION("slopes per decade") {
    CHECK(path_loss_db(40.0, p) - path_loss_db(20.0, p) == Approx(-20.0 * std::log10(2.0)));
    CHECK(path_loss_db(800.0, p) - path_loss_db(400.0, p) == Approx(-35.0 * std::log10(2.0)));
  }
}

TEST_CASE("wrap-around distance", "[scenario]") {
  const double side = 1.0;
  CHECK(wrapped_distance_m({0.05, 0.5}, {0.95, 0.5}, side) == Approx(100.0));
  CHECK(wrapped_distance_m({0.2, 0.2}, {0.2, 0.2}, side) == 0.0);
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const Point a{rng.uniform(0, side), rng.uniform(0, side)};
    const Point b{rng.uniform(0, side), rng.uniform(0, side)};
    const double d = wrapped_distance_m(a, b, side);
    CHECK(d <= 1000.0 * side / std::sqrt(2.0) + 1e-9);
    CHECK(d == Approx(wrapped_distance_m(b, a, side)));
  }
}

TEST_CASE("scenario draw invariants", "[scenario]") {
  SystemParams p;
  Rng a(11, 1, 0), b(11, 1, 0);
  const ScenarioRealization r = draw_scenario(p, a);
  const ScenarioRealization s = draw_scenario(p, b);
  REQUIRE(r.num_mn() == p.num_mn);
  CHECK(r.beta_tr == s.beta_tr);
  CHECK(r.beta_mm == s.beta_mm);
  for (int m = 0; m < p.num_mn; ++m) {
    CHECK(r.beta_mm(m, m) == 0.0);
    CHECK(r.beta_mr[m] > 0.0);
    CHECK(r.beta_tm[m] > 0.0);
    for (int k = 0; k < p.num_mn; ++k) CHECK(r.beta_mm(m, k) == r.beta_mm(k, m));
  }
  CHECK(r.rho_t == Approx(p.ut_power_w / noise_power(p)));
  CHECK(r.rho_j == Approx(2.0 * r.rho_t));
  for (const Point& q : r.mn_pos) {
    CHECK(q.x >= 0.0);
    CHECK(q.x <= p.area_km);
  }
}

TEST_CASE("shadowing statistics", "[scenario]") {
  // With every node co-located inside d0, beta_dB = -L - 15 log10(d1) - 20 log10(d0) + sigma z.
  SystemParams p;
  p.area_km = 0.005;
  const double mean_db = path_loss_db(1.0, p);
  Rng rng(5);
  double s = 0.0, s2 = 0.0;
  int n = 0;
  for (int i = 0; i < 400; ++i) {
    const ScenarioRealization r = draw_scenario(p, rng);
    for (double b : r.beta_mr) {
      const double db = 10.0 * std::log10(b) - mean_db;
      s += db;
      s2 += db * db;
      ++n;
    }
  }
  const double mu = s / n, sd = std::sqrt(s2 / n - mu * mu);
  CHECK(std::abs(mu) < 4.0 * p.shadow_std_db / std::sqrt(n));
  CHECK(sd == Approx(p.shadow_std_db).epsilon(0.05));
}

TEST_CASE("config parsing", "[scenario]") {
  std::istringstream in("# comment\nM = 12\nN=20\nD = 1.5  # trailing\nprecoder_kind = MRT\ncsi_case = case2\n");
  const SystemParams p = parse_params(in);
  CHECK(p.num_mn == 12);
  CHECK(p.mn_antennas == 20);
  CHECK(p.area_km == 1.5);
  CHECK(p.precoder == PrecoderKind::mrt);
  CHECK(p.csi_case == CsiCase::case2);

  SECTION("round trip through the key map") {
    SystemParams q;
    for (const auto& [k, v] : params_to_map(p)) set_param(q, k, v);
    CHECK(params_to_map(q) == params_to_map(p));
  }
  SECTION("errors") {
    std::istringstream bad_key("foo = 1\n");
    CHECK_THROWS_AS(parse_params(bad_key), ConfigError);
    std::istringstream bad_num("M = 3x\n");
    CHECK_THROWS_AS(parse_params(bad_num), ConfigError);
    CHECK_THROWS_AS(load_params("/nonexistent/cfg"), ConfigError);
  }
}

TEST_CASE("parameter validation", "[scenario]") {
  SystemParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.prelog() == Approx((300.0 - 80.0) / 300.0));
  SystemParams zf = p;
  zf.ut_antennas = 2;
  CHECK_THROWS_AS(zf.validate(), ConfigError);
  zf.precoder = PrecoderKind::mrt;
  CHECK_NOTHROW(zf.validate());
  SystemParams pil = p;
  pil.uplink_pilots = 3;
  CHECK_THROWS_AS(pil.validate(), ConfigError);
  SystemParams d = p;
  d.area_km = 0.0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  SystemParams tau = p;
  tau.coherence = 80;
  CHECK_THROWS_AS(tau.validate(), ConfigError);
}
