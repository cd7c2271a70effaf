#include "feddw/numerics.hpp"

#include <algorithm>
#include <limits>

namespace feddw {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

Rng Rng::split(std::string_view label) const { return Rng(mix64(seed_ ^ mix64(fnv1a64(label)))); }

Rng Rng::split(std::uint64_t label) const {
  return Rng(mix64(seed_ + 0x632be59bd9b4e019ULL * (label + 1)));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform_open() {
  double u;
  do {
    u = uniform();
  } while (u == 0.0);
  return u;
}

std::uint64_t Rng::uniform_index(std::uint64_t bound) {
  if (bound == 0) throw InvalidInput("uniform_index: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal() {
  // Marsaglia polar method; the spare value is discarded so the stream
  // position depends only on the number of calls.
  double u, v, s;
  do {
    u = 2 * uniform() - 1;
    v = 2 * uniform() - 1;
    s = u * u + v * v;
  } while (s >= 1 || s == 0);
  return u * std::sqrt(-2 * std::log(s) / s);
}

namespace {

// Marsaglia-Tsang for alpha >= 1.
double gamma_mt(Rng& rng, double alpha) {
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1 + c * x;
    } while (v <= 0);
    v = v * v * v;
    const double u = rng.uniform_open();
    if (u < 1 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1 - v + std::log(v))) return d * v;
  }
}

// log of a Gamma(alpha, 1) draw; alpha < 1 uses the boost
// Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha), kept in log space.
double log_gamma_draw(Rng& rng, double alpha) {
  if (alpha >= 1) return std::log(gamma_mt(rng, alpha));
  const double g = gamma_mt(rng, alpha + 1);
  return std::log(g) + std::log(rng.uniform_open()) / alpha;
}

}  // namespace

double Rng::gamma(double alpha) {
  if (!(alpha > 0)) throw InvalidInput("gamma: alpha must be positive");
  return std::exp(log_gamma_draw(*this, alpha));
}

Vector sample_dirichlet(Rng& rng, double alpha, int k) {
  if (!(alpha > 0) || !std::isfinite(alpha)) throw InvalidInput("sample_dirichlet: alpha must be positive");
  if (k < 2) throw InvalidInput("sample_dirichlet: k must be at least 2");
  Vector logs(k);
  for (int i = 0; i < k; ++i) logs[i] = log_gamma_draw(rng, alpha);
  Vector p = (logs.array() - logs.maxCoeff()).exp().matrix();
  // Entries that underflow are lifted to the smallest normal double.
  p = p.cwiseMax(std::numeric_limits<double>::min());
  return p / p.sum();
}

}  // namespace feddw
