#pragma once

namespace trialz {

/// Standard normal density.
double norm_pdf(double x);
/// Standard normal CDF, computed from erfc so both tails keep full
/// relative precision.
double norm_cdf(double x);
/// Upper tail 1 - Phi(x).
double norm_sf(double x);

/// Phi^{-1}(q) for q in (0,1): Wichura's AS241 rational approximation
/// followed by one Halley step against the erfc-based CDF. Throws
/// DomainError outside (0,1).
double inv_norm_cdf(double q);

}  // namespace trialz
