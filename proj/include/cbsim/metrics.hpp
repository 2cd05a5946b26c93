#pragma once

#include "cbsim/radio.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cbsim::metrics {

class NonMonotonicTime : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};
class ReversedInterval : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};
class InsufficientRuns : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Application-layer availability of one flow: the flow is unavailable at t when no reception succeeded in
/// (t - survival, t]. A virtual success at time 0 starts the flow available.
class AvailabilityTracker {
public:
  AvailabilityTracker(double survival_s, double observe_from_s = 0.0);

  void on_success(double t);
  void on_failure(double t);

  /// State at the most recent event time.
  bool available() const { return available_; }

  /// Fraction of [observe_from, end) during which the flow was available.
  double availability(double end_s) const;

  /// Unavailable time inside [observe_from, end).
  double unavailable_time(double end_s) const;

private:
  void   advance(double t);
  double clipped(double a, double b) const;

  double survival_;
  double from_;
  double last_event_   = 0.0;
  double last_success_ = 0.0;
  double unavailable_  = 0.0; // closed intervals only
  bool   available_    = true;
};

class CollisionCounter {
public:
  void record(bool collided)
  {
    ++utilized_;
    collided_ += collided ? 1 : 0;
  }
  std::uint64_t collided() const { return collided_; }
  std::uint64_t utilized() const { return utilized_; }

  /// C/T, or nullopt when the UE never used a contention-based resource.
  std::optional<double> probability() const;

private:
  std::uint64_t collided_ = 0;
  std::uint64_t utilized_ = 0;
};

/// Mean of the defined per-UE collision probabilities; nullopt when none is defined.
std::optional<double> mean_collision_probability(const std::vector<CollisionCounter>& counters);

struct TransferRecord {
  int    iteration;
  UeId   ue;
  double start_s;
  double end_s;
  double duration_s() const { return end_s - start_s; }
};

class TransferLedger {
public:
  void record_download(int iteration, UeId ue, double start_s, double end_s);
  void record_upload(int iteration, UeId ue, double start_s, double end_s);
  void record_iteration(int iteration, double start_s, double end_s);
  void set_incomplete(int n) { incomplete_ = n; }

  const std::vector<TransferRecord>& downloads() const { return downloads_; }
  const std::vector<TransferRecord>& uploads() const { return uploads_; }
  const std::vector<TransferRecord>& iterations() const { return iterations_; }
  int                                incomplete() const { return incomplete_; }

  std::optional<double> mean_download_s() const { return mean(downloads_); }
  std::optional<double> mean_upload_s() const { return mean(uploads_); }
  std::optional<double> mean_iteration_s() const { return mean(iterations_); }

private:
  static std::optional<double> mean(const std::vector<TransferRecord>& v);
  static void                  check(double start_s, double end_s);

  std::vector<TransferRecord> downloads_;
  std::vector<TransferRecord> uploads_;
  std::vector<TransferRecord> iterations_;
  int                         incomplete_ = 0;
};

struct Summary {
  double      mean;
  double      ci95; // Student-t half-width
  std::size_t n;
};

Summary summarize(const std::vector<double>& values);

/// Two-sided 97.5% Student-t quantile with `dof` degrees of freedom.
double student_t_975(std::size_t dof);

using MetricMap = std::map<std::string, double>;

} // namespace cbsim::metrics
