#include "deepgrowth/temporal.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dg {

std::vector<double> ScanTimeline::intervals() const {
  std::vector<double> tau;
  for (std::size_t i = 1; i < normalized.size(); ++i) tau.push_back(normalized[i] - normalized[i - 1]);
  return tau;
}

ScanTimeline normalize_dates(const std::vector<int>& dates_days, int horizon_days) {
  if (dates_days.empty()) throw std::invalid_argument("normalize_dates: no dates");
  for (std::size_t i = 1; i < dates_days.size(); ++i)
    if (dates_days[i] <= dates_days[i - 1])
      throw std::invalid_argument("normalize_dates: dates must be strictly increasing (" +
                                  std::to_string(dates_days[i - 1]) + " then " +
                                  std::to_string(dates_days[i]) + ")");
  const int span = dates_days.back() - dates_days.front();
  if (horizon_days <= 0 || horizon_days < span)
    throw std::invalid_argument("normalize_dates: horizon " + std::to_string(horizon_days) +
                                " days shorter than span " + std::to_string(span));
  ScanTimeline t;
  t.dates_days = dates_days;
  for (int d : dates_days)
    t.normalized.push_back(static_cast<double>(d - dates_days.front()) / horizon_days);
  return t;
}

TemporalCode temporal_encode(double tau, int order) {
  if (order < 1) throw std::invalid_argument("temporal_encode: order must be >= 1");
  TemporalCode c{tau, order, {}};
  c.code.reserve(2 * static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const double arg = std::ldexp(1.0, k) * std::numbers::pi * tau;
    c.code.push_back(std::sin(arg));
    c.code.push_back(std::cos(arg));
  }
  return c;
}

std::string to_string(TimeMode mode) {
  switch (mode) {
    case TimeMode::Encoded: return "encoded";
    case TimeMode::Raw: return "raw";
    case TimeMode::None: return "none";
  }
  return "encoded";
}

TimeMode time_mode_from_string(const std::string& s) {
  if (s == "encoded") return TimeMode::Encoded;
  if (s == "raw") return TimeMode::Raw;
  if (s == "none") return TimeMode::None;
  throw std::invalid_argument("unknown time mode '" + s + "' (expected encoded, raw or none)");
}

int time_channels(TimeMode mode, int order) {
  switch (mode) {
    case TimeMode::Encoded: return 2 * order;
    case TimeMode::Raw: return 1;
    case TimeMode::None: return 0;
  }
  return 0;
}

std::vector<double> time_features(TimeMode mode, double tau, int order) {
  switch (mode) {
    case TimeMode::Encoded: return temporal_encode(tau, order).code;
    case TimeMode::Raw: return {tau};
    case TimeMode::None: return {};
  }
  return {};
}

ad::Tensor concat_code_to_grid(const ad::Tensor& z, const std::vector<double>& code,
                               double dropout_rate, bool training, std::mt19937_64& rng) {
  if (z.rank() != 4) throw ad::ShapeError("concat_code_to_grid: expected [C,d,h,w], got " + ad::shape_string(z.shape()));
  if (code.empty()) return z;
  auto vec = ad::Tensor::from({code.size()}, code);
  vec = ad::dropout(vec, dropout_rate, training, rng);
  return ad::concat0({z, ad::broadcast_to_grid(vec, z.dim(1), z.dim(2), z.dim(3))});
}

}  // namespace dg
