#pragma once

// Block bootstraps that resample each segment independently.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "condex/error.hpp"
#include "condex/parallel.hpp"
#include "condex/rng.hpp"
#include "condex/series.hpp"
#include "condex/stats.hpp"

namespace condex {

enum class BootstrapKind { block, moving_block, stationary };

struct BootstrapScheme {
  BootstrapKind kind = BootstrapKind::moving_block;
  std::size_t block_length = 20;  ///< mean length for the stationary scheme
  std::uint64_t seed = 1;
};

inline BootstrapKind parse_bootstrap_kind(const std::string& s) {
  if (s == "block") return BootstrapKind::block;
  if (s == "moving_block") return BootstrapKind::moving_block;
  if (s == "stationary") return BootstrapKind::stationary;
  throw InputError("unknown bootstrap scheme '" + s + "'");
}

/// Geometric block length with mean b (support 1, 2, ...).
inline std::size_t sample_stationary_block_length(std::size_t b, CounterRng& rng) {
  if (b <= 1) return 1;
  const double p = 1.0 / static_cast<double>(b);
  return 1 + static_cast<std::size_t>(std::floor(std::log(rng.uniform()) / std::log1p(-p)));
}

/// One bootstrap replicate; `replicate` selects the random stream.
template <class Tag>
Series<Tag> resample_series(const Series<Tag>& s, const BootstrapScheme& scheme, std::uint64_t replicate = 0) {
  s.validate();
  const std::size_t b = scheme.block_length;
  if (b < 1) throw InputError("bootstrap block length must be >= 1");
  for (const auto& seg : s.segments)
    if (b > seg.size())
      throw InputError("bootstrap block length " + std::to_string(b) + " exceeds a segment of length " +
                       std::to_string(seg.size()));
  CounterRng rng(scheme.seed, replicate);
  Series<Tag> out;
  out.segments = s.segments;
  out.values.reserve(s.size());
  for (const auto& seg : s.segments) {
    const std::size_t L = seg.size();
    const double* x = s.values.data() + seg.begin;
    std::size_t filled = 0;
    while (filled < L) {
      std::size_t start = 0, len = b;
      switch (scheme.kind) {
        case BootstrapKind::block: start = b * rng.below(L / b); break;
        case BootstrapKind::moving_block: start = rng.below(L - b + 1); break;
        case BootstrapKind::stationary:
          start = rng.below(L);
          len = sample_stationary_block_length(b, rng);
          break;
      }
      len = std::min(len, L - filled);
      for (std::size_t j = 0; j < len; ++j) out.values.push_back(x[(start + j) % L]);
      filled += len;
    }
  }
  return out;
}

struct BootstrapResult {
  double std_error = 0;
  double ci_low = 0;
  double ci_high = 0;
  std::vector<double> replicates;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

/// Replicate matrix for a vector-valued estimator; failed replicates are
/// dropped and counted.
struct BootstrapReplicates {
  std::vector<std::vector<double>> values;  ///< one row per kept replicate, in replicate order
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

template <class Tag>
BootstrapReplicates bootstrap_replicates(const Series<Tag>& s, const BootstrapScheme& scheme, int replications,
                                         const std::function<std::vector<double>(const Series<Tag>&)>& estimator,
                                         unsigned threads = 1) {
  if (replications < 50) throw InputError("bootstrap needs at least 50 replications");
  // fail on an unusable scheme before any replicate runs
  (void)resample_series(s, scheme, 0);
  BootstrapReplicates r;
  if (replications < 200) r.warnings.push_back("fewer than 200 bootstrap replications");
  const auto R = static_cast<std::size_t>(replications);
  std::vector<std::optional<std::vector<double>>> out(R);
  detail::parallel_for(R, threads, [&](std::size_t i) {
    try {
      auto v = estimator(resample_series(s, scheme, static_cast<std::uint64_t>(i)));
      for (double x : v)
        if (!std::isfinite(x)) throw NumericalError("non-finite replicate estimate");
      out[i] = std::move(v);
    } catch (const InputError&) {
    } catch (const NumericalError&) {
    }
  });
  for (auto& o : out) {
    if (o) r.values.push_back(std::move(*o));
    else ++r.dropped;
  }
  if (static_cast<double>(r.dropped) > 0.2 * replications)
    throw NumericalError("bootstrap: " + std::to_string(r.dropped) + " of " + std::to_string(replications) +
                         " replicates failed");
  return r;
}

/// Linear-interpolation empirical quantile of a sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Percentile interval from the 2.5% and 97.5% empirical quantiles.
template <class Tag>
BootstrapResult bootstrap_estimate(const Series<Tag>& s, const BootstrapScheme& scheme, int replications,
                                   const std::function<double(const Series<Tag>&)>& estimator, unsigned threads = 1) {
  const std::function<std::vector<double>(const Series<Tag>&)> vec = [&](const Series<Tag>& x) {
    return std::vector<double>{estimator(x)};
  };
  auto reps = bootstrap_replicates(s, scheme, replications, vec, threads);
  BootstrapResult r;
  r.dropped = reps.dropped;
  r.warnings = std::move(reps.warnings);
  for (const auto& v : reps.values) r.replicates.push_back(v[0]);
  r.std_error = r.replicates.size() > 1 ? std::sqrt(variance(r.replicates)) : 0.0;
  std::vector<double> sorted = r.replicates;
  std::sort(sorted.begin(), sorted.end());
  r.ci_low = sorted_quantile(sorted, 0.025);
  r.ci_high = sorted_quantile(sorted, 0.975);
  return r;
}

}  // namespace condex
