#pragma once

// Scan-date normalization and the multi-frequency sinusoidal encoding of scan
// intervals used to condition the recurrent predictor.

#include <random>
#include <string>
#include <vector>

#include "deepgrowth/autodiff.hpp"

namespace dg {

struct ScanTimeline {
  std::vector<int> dates_days;
  std::vector<double> normalized;  // (date - first) / horizon

  /// tau_i = D_{i+1} - D_i
  std::vector<double> intervals() const;
};

/// Throws std::invalid_argument unless dates strictly increase and the
/// horizon covers the span.
ScanTimeline normalize_dates(const std::vector<int>& dates_days, int horizon_days);

struct TemporalCode {
  double tau = 0.0;
  int order = 0;
  std::vector<double> code;  // [sin(2^0 pi tau), cos(2^0 pi tau), ..., cos(2^(l-1) pi tau)]
};

TemporalCode temporal_encode(double tau, int order);

/// How scan intervals reach the recurrent module.
enum class TimeMode {
  Encoded,  // 2l sinusoidal channels
  Raw,      // tau as one channel
  None,     // no time channels
};

std::string to_string(TimeMode mode);
TimeMode time_mode_from_string(const std::string& s);
int time_channels(TimeMode mode, int order);

/// Per-step conditioning vector for the given mode (empty for None).
std::vector<double> time_features(TimeMode mode, double tau, int order);

/// Appends the (dropout-processed) code to every spatial position of
/// z [C,d,h,w]. Dropout is drawn once for the whole vector, then broadcast.
ad::Tensor concat_code_to_grid(const ad::Tensor& z, const std::vector<double>& code,
                               double dropout_rate, bool training, std::mt19937_64& rng);
inline ad::Tensor concat_code_to_grid(const ad::Tensor& z, const TemporalCode& code,
                                      double dropout_rate, bool training, std::mt19937_64& rng) {
  return concat_code_to_grid(z, code.code, dropout_rate, training, rng);
}

}  // namespace dg
