#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace matext {

double mean(const std::vector<double>& v);

/// Unbiased sample variance (n-1 denominator). Requires v.size() >= 2.
double sample_var(const std::vector<double>& v);

/// Plug-in variance (n denominator), as used for Monte Carlo summaries.
double population_var(const std::vector<double>& v);

double sample_sd(const std::vector<double>& v);

/// Central fourth moment (n denominator).
double central_moment4(const std::vector<double>& v);

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile (Wichura's AS241 rational approximation,
/// accurate to ~1e-15). p must lie in (0, 1).
double normal_quantile(double p);

/// z_{1-alpha/2} for two-sided normal intervals.
double two_sided_z(double alpha);

/// Shortest round-trip decimal representation of a double. All numeric file
/// output funnels through this so that serialized values reload exactly and
/// byte-for-byte reproducibility holds.
std::string format_double(double x);

}  // namespace matext
