#include <cmath>
#include <vector>

#include "doctest.h"
#include "swa/coder.hpp"
#include "swa/rng.hpp"
#include "swa/tensor.hpp"

using namespace swa;

namespace {

std::vector<uint8_t> roundtrip_encode(const std::vector<int>& syms, const std::vector<CdfTable>& tables) {
  RangeEncoder enc;
  for (size_t i = 0; i < syms.size(); ++i) enc.encode(syms[i], tables[i]);
  return enc.finish();
}

std::vector<int> roundtrip_decode(const std::vector<uint8_t>& bytes, const std::vector<CdfTable>& tables) {
  RangeDecoder dec(bytes.data(), bytes.size());
  std::vector<int> out;
  out.reserve(tables.size());
  for (const auto& t : tables) out.push_back(dec.decode(t));
  return out;
}

}  // namespace

TEST_CASE("cdf tables: mass, monotonicity, floor rule") {
  Rng rng(1);
  for (int rep = 0; rep < 1000; ++rep) {
    const double mu = rng.normal(0.0, 20.0);
    const double sigma = 0.02 + std::fabs(rng.normal(0.0, 5.0));
    const CdfTable t = build_cdf(mu, sigma, 0.02);
    REQUIRE(t.cum.size() == 129);
    CHECK(t.cum.front() == 0);
    CHECK(t.cum.back() == 65536);
    for (size_t i = 1; i < t.cum.size(); ++i) CHECK(t.cum[i] > t.cum[i - 1]);  // freq >= 1
  }
}

TEST_CASE("cdf limits: flat and peaked") {
  const CdfTable flat = build_cdf(0.0, 1000.0, 0.02);
  // Interior bins carry equal mass (within one count of rounding) and the
  // table mirrors around zero; the folded tails live in the edge symbols.
  const uint32_t interior = flat.freq(0);
  for (int s = -63; s <= 62; ++s) {
    CHECK(flat.freq(s) + 1 >= interior);
    CHECK(flat.freq(s) <= interior + 1);
  }
  for (int s = 1; s <= 62; ++s) {  // s = 63 is a folded edge, not a mirror pair
    const int64_t d = static_cast<int64_t>(flat.freq(s)) - static_cast<int64_t>(flat.freq(-s));
    CHECK(std::abs(d) <= 1);
  }
  CHECK(flat.freq(-64) > interior);  // tail mass folded in
  CHECK(flat.freq(63) > interior);

  const CdfTable peaked = build_cdf(0.0, 0.02, 0.02);
  CHECK(peaked.freq(0) == 65536 - 127);
  for (int s = -64; s <= 63; ++s)
    if (s != 0) CHECK(peaked.freq(s) == 1);
}

TEST_CASE("cdf rejects contract violations") {
  CHECK_THROWS_AS(build_cdf(0.0, 0.01, 0.02), ContractError);
  CHECK_THROWS_AS(build_cdf(0.0, 1.0, 0.02, -64, 63, 4), ContractError);
}

TEST_CASE("cdf construction is deterministic") {
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const double mu = rng.normal(0.0, 3.0);
    const double sigma = 0.05 + std::fabs(rng.normal(0.0, 2.0));
    const CdfTable a = build_cdf(mu, sigma, 0.02);
    const CdfTable b = build_cdf(mu, sigma, 0.02);
    CHECK(a.cum == b.cum);
  }
  // Fixed-point snapping: inputs closer than 2^-17 give identical tables.
  const CdfTable a = build_cdf(0.25, 1.0, 0.02);
  const CdfTable b = build_cdf(0.25 + 1e-9, 1.0, 0.02);
  CHECK(a.cum == b.cum);
}

TEST_CASE("range coder: empty and single-symbol payloads") {
  RangeEncoder empty;
  CHECK(empty.finish().empty());

  const CdfTable peaked = build_cdf(0.0, 0.02, 0.02);
  const auto bytes = roundtrip_encode({0}, {peaked});
  CHECK(bytes.size() <= 2);
  CHECK(roundtrip_decode(bytes, {peaked}) == std::vector<int>{0});
}

TEST_CASE("range coder: exact round trip and near-entropy length") {
  Rng rng(3);
  std::vector<int> syms;
  std::vector<CdfTable> tables;
  for (int i = 0; i < 10000; ++i) {
    const double mu = rng.normal(0.0, 10.0);
    const double sigma = 0.05 + std::fabs(rng.normal(0.0, 3.0));
    tables.push_back(build_cdf(mu, sigma, 0.02));
    const double draw = mu + sigma * rng.normal();
    int s = static_cast<int>(round_half_even(draw));
    s = std::min(kSupportMax, std::max(kSupportMin, s));
    syms.push_back(s);
  }
  const auto bytes = roundtrip_encode(syms, tables);
  CHECK(roundtrip_decode(bytes, tables) == syms);

  const double ideal = table_bits(syms, tables);
  const double actual = static_cast<double>(bytes.size()) * 8.0;
  CHECK(actual >= ideal);       // entropy is a lower bound
  CHECK(actual - ideal <= 32);  // flush + renormalization slack
}

TEST_CASE("range coder: adversarial symbol patterns round trip") {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = rng.uniform_int(1, 400);
    std::vector<int> syms;
    std::vector<CdfTable> tables;
    for (int i = 0; i < n; ++i) {
      const double mu = rng.normal(0.0, 40.0);
      const double sigma = 0.02 + std::fabs(rng.normal(0.0, 8.0));
      tables.push_back(build_cdf(mu, sigma, 0.02));
      // Uniform symbols stress the mismatch between model and data.
      syms.push_back(rng.uniform_int(kSupportMin, kSupportMax));
    }
    const auto bytes = roundtrip_encode(syms, tables);
    CHECK(roundtrip_decode(bytes, tables) == syms);
  }
}

TEST_CASE("estimate_rate_bits values") {
  // Symbol at the mean with tiny sigma costs nearly nothing.
  CHECK(estimate_rate_bits({0}, {0.0}, {0.02}) <= 1e-9);

  // Unit Gaussian, symbol 0: -log2(Phi(0.5) - Phi(-0.5)).
  const double ref = -std::log2(norm_cdf(0.5) - norm_cdf(-0.5));
  CHECK(estimate_rate_bits({0}, {0.0}, {1.0}) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(ref == doctest::Approx(1.3848).epsilon(1e-3));
}

TEST_CASE("continuous estimate tracks actual coded length within 1%") {
  Rng rng(5);
  std::vector<int> syms;
  std::vector<CdfTable> tables;
  std::vector<double> mus, sigmas;
  for (int i = 0; i < 20000; ++i) {
    const double mu = rng.normal(0.0, 4.0);
    const double sigma = 0.4 + std::fabs(rng.normal(0.0, 2.0));
    const double draw = mu + sigma * rng.normal();
    int s = static_cast<int>(round_half_even(draw));
    s = std::min(kSupportMax, std::max(kSupportMin, s));
    syms.push_back(s);
    mus.push_back(mu);
    sigmas.push_back(sigma);
    tables.push_back(build_cdf(mu, sigma, 0.02));
  }
  const double actual = static_cast<double>(roundtrip_encode(syms, tables).size()) * 8.0;
  const double estimate = estimate_rate_bits(syms, mus, sigmas);
  CHECK(std::fabs(actual - estimate) / actual <= 0.01);
}

TEST_CASE("coder determinism across runs") {
  Rng rng(6);
  std::vector<int> syms;
  std::vector<CdfTable> tables;
  for (int i = 0; i < 500; ++i) {
    const double mu = rng.normal(0.0, 2.0);
    const double sigma = 0.1 + std::fabs(rng.normal(0.0, 1.0));
    tables.push_back(build_cdf(mu, sigma, 0.02));
    syms.push_back(std::min(kSupportMax, std::max(kSupportMin, static_cast<int>(round_half_even(mu)))));
  }
  CHECK(roundtrip_encode(syms, tables) == roundtrip_encode(syms, tables));
}
