#pragma once

#include "cbsim/config.hpp"
#include "cbsim/simulation.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cbsim {

/// One point of the experiment matrix, without the seed.
struct MatrixPoint {
  mac::Policy   policy;
  int           n_fl;
  std::uint64_t model_bytes;
  double        b_cb_hz;

  std::string label(double system_bandwidth_hz) const { return policy_label(policy, b_cb_hz, system_bandwidth_hz); }
  /// `base` with this point's policy, N_FL, model size and CB cap applied.
  ExperimentConfig apply(const ExperimentConfig& base) const;
};

/// Cartesian product of the sweep axes. The CB cap axis only multiplies contention-based policies.
std::vector<MatrixPoint> enumerate_points(const ExperimentConfig& cfg);

struct MatrixRun {
  MatrixPoint              point;
  std::uint64_t            seed;
  std::optional<RunResult> result;
  std::string              error;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (point, seed) cell. Failures are recorded per cell and do not stop the matrix.
/// Results come back in enumeration order whatever the thread count.
std::vector<MatrixRun> run_matrix(const ExperimentConfig& cfg, unsigned threads = 0, const ProgressFn& progress = {});

/// Runs an explicit list of points, `seeds` each.
std::vector<MatrixRun> run_points(const ExperimentConfig&         cfg,
                                  const std::vector<MatrixPoint>& points,
                                  const std::vector<std::uint64_t>& seeds,
                                  unsigned                        threads  = 0,
                                  const ProgressFn&               progress = {});

/// A row of the results CSV.
struct ResultRow {
  std::string   policy;
  int           n_fl;
  std::uint64_t model_bytes;
  std::uint64_t seed;
  std::string   metric;
  double        value;
};

struct SummaryRow {
  std::string   policy;
  int           n_fl;
  std::uint64_t model_bytes;
  std::string   metric;
  double        mean;
  double        ci95; // NaN with a single run
  std::size_t   n;
};

inline constexpr const char* results_header = "policy,n_fl,model_bytes,seed,metric,value";
inline constexpr const char* summary_header = "policy,n_fl,model_bytes,metric,mean,ci95";

std::vector<ResultRow> result_rows(const std::vector<MatrixRun>& runs, double system_bandwidth_hz);

/// Per-cell mean and CI over seeds. Failed runs show up as a "failed_runs" metric.
std::vector<SummaryRow> summarize_rows(const std::vector<ResultRow>& rows);

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& is);

/// Raw per-run files carrying the key columns in front.
void write_transfers_csv(std::ostream& os, const std::vector<MatrixRun>& runs, double system_bandwidth_hz);
void write_iterations_csv(std::ostream& os, const std::vector<MatrixRun>& runs, double system_bandwidth_hz);
void write_ue_metrics_csv(std::ostream& os, const std::vector<MatrixRun>& runs, double system_bandwidth_hz);

/// Single-run files with the bare schemas.
void write_run_transfers_csv(std::ostream& os, const RunResult& r);
void write_run_iterations_csv(std::ostream& os, const RunResult& r);
void write_run_ue_metrics_csv(std::ostream& os, const RunResult& r);
void write_trace_csv(std::ostream& os, const std::vector<mac::TraceRecord>& trace);

struct BoundaryEntry {
  std::uint64_t model_bytes;
  std::string   cb_label;
  std::string   verdict; // YES, NO or "YES (up to N UEs)"
  int           up_to_n_fl; // largest n_fl from the smallest upward where CB wins; 0 when none
};

/// For each (model size, CB cap): does CB with dedicated retransmissions beat DS on mean upload time, and up to
/// which n_fl. Uses the summary rows.
std::vector<BoundaryEntry> boundary_report(const std::vector<SummaryRow>& summary);
void                       write_boundary_csv(std::ostream& os, const std::vector<BoundaryEntry>& entries);

/// Rebuilds summary.csv and boundary.csv next to results.csv in `dir`.
void report_directory(const std::string& dir);

/// Shortest exact decimal form of a double.
std::string format_double(double v);

} // namespace cbsim
