#include "cbsim/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cbsim::metrics {

AvailabilityTracker::AvailabilityTracker(double survival_s, double observe_from_s) : survival_(survival_s), from_(observe_from_s)
{
  if (survival_s <= 0.0) {
    throw std::invalid_argument("survival time must be positive");
  }
}

double AvailabilityTracker::clipped(double a, double b) const
{
  a = std::max(a, from_);
  return b > a ? b - a : 0.0;
}

void AvailabilityTracker::advance(double t)
{
  if (t < last_event_) {
    throw NonMonotonicTime("availability events must arrive in nondecreasing time");
  }
  last_event_ = t;
  available_  = t < last_success_ + survival_;
}

void AvailabilityTracker::on_success(double t)
{
  advance(t);
  const double down_from = last_success_ + survival_;
  if (t > down_from) {
    unavailable_ += clipped(down_from, t);
  }
  last_success_ = t;
  available_    = true;
}

void AvailabilityTracker::on_failure(double t)
{
  advance(t);
}

double AvailabilityTracker::unavailable_time(double end_s) const
{
  double total = unavailable_;
  // Closed intervals end at successes, all at or before last_event_ <= end_s.
  const double down_from = last_success_ + survival_;
  if (end_s > down_from) {
    total += clipped(down_from, end_s);
  }
  return total;
}

double AvailabilityTracker::availability(double end_s) const
{
  const double span = end_s - from_;
  if (span <= 0.0) {
    return 1.0;
  }
  return 1.0 - unavailable_time(end_s) / span;
}

std::optional<double> CollisionCounter::probability() const
{
  if (utilized_ == 0) {
    return std::nullopt;
  }
  return static_cast<double>(collided_) / static_cast<double>(utilized_);
}

std::optional<double> mean_collision_probability(const std::vector<CollisionCounter>& counters)
{
  double sum = 0.0;
  int    n   = 0;
  for (const auto& c : counters) {
    if (auto p = c.probability()) {
      sum += *p;
      ++n;
    }
  }
  if (n == 0) {
    return std::nullopt;
  }
  return sum / n;
}

void TransferLedger::check(double start_s, double end_s)
{
  if (!(end_s > start_s)) {
    throw ReversedInterval("transfer must end after it starts");
  }
}

void TransferLedger::record_download(int iteration, UeId ue, double start_s, double end_s)
{
  check(start_s, end_s);
  downloads_.push_back({iteration, ue, start_s, end_s});
}

void TransferLedger::record_upload(int iteration, UeId ue, double start_s, double end_s)
{
  check(start_s, end_s);
  uploads_.push_back({iteration, ue, start_s, end_s});
}

void TransferLedger::record_iteration(int iteration, double start_s, double end_s)
{
  check(start_s, end_s);
  iterations_.push_back({iteration, 0, start_s, end_s});
}

std::optional<double> TransferLedger::mean(const std::vector<TransferRecord>& v)
{
  if (v.empty()) {
    return std::nullopt;
  }
  double sum = 0.0;
  for (const auto& r : v) {
    sum += r.duration_s();
  }
  return sum / static_cast<double>(v.size());
}

double student_t_975(std::size_t dof)
{
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

Summary summarize(const std::vector<double>& values)
{
  const std::size_t n = values.size();
  if (n < 2) {
    throw InsufficientRuns("at least two runs are needed for a confidence interval");
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double       ss   = 0.0;
  for (double v : values) {
    ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, student_t_975(n - 1) * sd / std::sqrt(static_cast<double>(n)), n};
}

} // namespace cbsim::metrics
