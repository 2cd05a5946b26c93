#include "cbsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

namespace cbsim {

std::string format_double(double v)
{
  if (std::isnan(v)) {
    return "nan";
  }
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, p) : std::string("nan");
}

ExperimentConfig MatrixPoint::apply(const ExperimentConfig& base) const
{
  ExperimentConfig c         = base;
  c.policy                   = policy;
  c.deployment.num_fl        = static_cast<unsigned>(n_fl);
  c.fl.model_bytes           = model_bytes;
  c.radio.cb_bandwidth_cap_hz = b_cb_hz;
  return c;
}

std::vector<MatrixPoint> enumerate_points(const ExperimentConfig& cfg)
{
  std::vector<MatrixPoint> out;
  for (auto p : cfg.sweep_policies) {
    for (int n : cfg.sweep_n_fl) {
      for (auto bytes : cfg.sweep_model_bytes) {
        if (mac::is_contention_based(p)) {
          for (double b : cfg.sweep_b_cb_hz) {
            out.push_back({p, n, bytes, b});
          }
        } else {
          out.push_back({p, n, bytes, cfg.radio.system_bandwidth_hz});
        }
      }
    }
  }
  return out;
}

std::vector<MatrixRun> run_points(const ExperimentConfig&           cfg,
                                  const std::vector<MatrixPoint>&   points,
                                  const std::vector<std::uint64_t>& seeds,
                                  unsigned                          threads,
                                  const ProgressFn&                 progress)
{
  std::vector<MatrixRun> runs;
  for (const auto& p : points) {
    for (auto s : seeds) {
      runs.push_back({p, s, std::nullopt, {}});
    }
  }
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, runs.size())));

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex               progress_mu;
  auto                     worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      auto& r = runs[i];
      try {
        r.result = run_single(r.point.apply(cfg), r.seed);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      const std::size_t d = ++done;
      if (progress) {
        std::lock_guard lock(progress_mu);
        progress(d, runs.size());
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  return runs;
}

std::vector<MatrixRun> run_matrix(const ExperimentConfig& cfg, unsigned threads, const ProgressFn& progress)
{
  cfg.validate();
  return run_points(cfg, enumerate_points(cfg), cfg.seeds(), threads, progress);
}

std::vector<ResultRow> result_rows(const std::vector<MatrixRun>& runs, double system_bandwidth_hz)
{
  std::vector<ResultRow> rows;
  for (const auto& r : runs) {
    const std::string label = r.point.label(system_bandwidth_hz);
    if (!r.result) {
      rows.push_back({label, r.point.n_fl, r.point.model_bytes, r.seed, "failed", 1.0});
      continue;
    }
    for (const auto& [k, v] : r.result->metrics) {
      rows.push_back({label, r.point.n_fl, r.point.model_bytes, r.seed, k, v});
    }
  }
  return rows;
}

std::vector<SummaryRow> summarize_rows(const std::vector<ResultRow>& rows)
{
  using Key = std::tuple<std::string, int, std::uint64_t, std::string>;
  std::vector<Key>                        order;
  std::map<Key, std::vector<double>>      values;
  for (const auto& r : rows) {
    Key k{r.policy, r.n_fl, r.model_bytes, r.metric};
    auto [it, fresh] = values.try_emplace(k);
    if (fresh) {
      order.push_back(k);
    }
    it->second.push_back(r.value);
  }
  std::vector<SummaryRow> out;
  for (const auto& k : order) {
    const auto& v = values[k];
    SummaryRow  s{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), 0.0, std::nan(""), v.size()};
    if (s.metric == "failed") {
      s.metric = "failed_runs";
      s.mean   = static_cast<double>(v.size());
      s.ci95   = 0.0;
    } else if (v.size() >= 2) {
      const auto sm = metrics::summarize(v);
      s.mean        = sm.mean;
      s.ci95        = sm.ci95;
    } else {
      s.mean = v.front();
    }
    out.push_back(s);
  }
  return out;
}

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows)
{
  os << results_header << '\n';
  for (const auto& r : rows) {
    os << r.policy << ',' << r.n_fl << ',' << r.model_bytes << ',' << r.seed << ',' << r.metric << ',' << format_double(r.value)
       << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows)
{
  os << summary_header << '\n';
  for (const auto& r : rows) {
    os << r.policy << ',' << r.n_fl << ',' << r.model_bytes << ',' << r.metric << ',' << format_double(r.mean) << ','
       << format_double(r.ci95) << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
  std::vector<std::string> out;
  std::string              cell;
  std::stringstream        ss(line);
  while (std::getline(ss, cell, ',')) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

} // namespace

std::vector<ResultRow> read_results_csv(std::istream& is)
{
  std::vector<ResultRow> rows;
  std::string            line;
  if (!std::getline(is, line) || line != results_header) {
    throw std::runtime_error("results CSV: unexpected header");
  }
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    auto c = split_csv(line);
    if (c.size() != 6) {
      throw std::runtime_error("results CSV line " + std::to_string(lineno) + ": expected 6 fields");
    }
    rows.push_back({c[0], std::stoi(c[1]), std::stoull(c[2]), std::stoull(c[3]), c[4], std::strtod(c[5].c_str(), nullptr)});
  }
  return rows;
}

void write_transfers_csv(std::ostream& os, const std::vector<MatrixRun>& runs, double bw)
{
  os << "policy,n_fl,model_bytes,seed,iteration,ue,download_s,upload_s\n";
  for (const auto& r : runs) {
    if (!r.result) {
      continue;
    }
    std::ostringstream body;
    write_run_transfers_csv(body, *r.result);
    std::istringstream in(body.str());
    std::string        line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      os << r.point.label(bw) << ',' << r.point.n_fl << ',' << r.point.model_bytes << ',' << r.seed << ',' << line << '\n';
    }
  }
}

void write_iterations_csv(std::ostream& os, const std::vector<MatrixRun>& runs, double bw)
{
  os << "policy,n_fl,model_bytes,seed,iteration,iteration_time_s\n";
  for (const auto& r : runs) {
    if (!r.result) {
      continue;
    }
    for (const auto& it : r.result->ledger.iterations()) {
      os << r.point.label(bw) << ',' << r.point.n_fl << ',' << r.point.model_bytes << ',' << r.seed << ',' << it.iteration << ','
         << format_double(it.duration_s()) << '\n';
    }
  }
}

void write_ue_metrics_csv(std::ostream& os, const std::vector<MatrixRun>& runs, double bw)
{
  os << "policy,n_fl,model_bytes,seed,ue,class,ul_availability,dl_availability,collided,utilized\n";
  for (const auto& r : runs) {
    if (!r.result) {
      continue;
    }
    for (const auto& u : r.result->ues) {
      os << r.point.label(bw) << ',' << r.point.n_fl << ',' << r.point.model_bytes << ',' << r.seed << ',' << u.ue << ','
         << (u.cls == mac::UeClass::urllc ? "urllc" : "fl") << ',' << format_double(u.ul_availability) << ','
         << format_double(u.dl_availability) << ',' << u.collided << ',' << u.utilized << '\n';
    }
  }
}

void write_run_transfers_csv(std::ostream& os, const RunResult& r)
{
  os << "iteration,ue,download_s,upload_s\n";
  std::map<std::pair<int, UeId>, std::pair<std::optional<double>, std::optional<double>>> rows;
  for (const auto& d : r.ledger.downloads()) {
    rows[{d.iteration, d.ue}].first = d.duration_s();
  }
  for (const auto& u : r.ledger.uploads()) {
    rows[{u.iteration, u.ue}].second = u.duration_s();
  }
  for (const auto& [k, v] : rows) {
    os << k.first << ',' << k.second << ',' << (v.first ? format_double(*v.first) : "") << ','
       << (v.second ? format_double(*v.second) : "") << '\n';
  }
}

void write_run_iterations_csv(std::ostream& os, const RunResult& r)
{
  os << "iteration,iteration_time_s\n";
  for (const auto& it : r.ledger.iterations()) {
    os << it.iteration << ',' << format_double(it.duration_s()) << '\n';
  }
}

void write_run_ue_metrics_csv(std::ostream& os, const RunResult& r)
{
  os << "ue,class,ul_availability,dl_availability,collided,utilized\n";
  for (const auto& u : r.ues) {
    os << u.ue << ',' << (u.cls == mac::UeClass::urllc ? "urllc" : "fl") << ',' << format_double(u.ul_availability) << ','
       << format_double(u.dl_availability) << ',' << u.collided << ',' << u.utilized << '\n';
  }
}

void write_trace_csv(std::ostream& os, const std::vector<mac::TraceRecord>& trace)
{
  os << "slot,grant_kind,rb_count,mcs,ue_or_set,outcome\n";
  for (const auto& t : trace) {
    os << t.slot << ',' << radio::to_string(t.kind) << ',' << t.rb_count << ',' << t.mcs_index << ','
       << (t.target.is_set() ? "set" : "ue") << t.target.id << ',';
    if (t.outcome == mac::TxOutcome::collision) {
      os << "collision_" << t.transmitters;
    } else {
      os << mac::to_string(t.outcome);
    }
    os << '\n';
  }
}

std::vector<BoundaryEntry> boundary_report(const std::vector<SummaryRow>& summary)
{
  // (label, model) -> n_fl -> mean upload
  std::map<std::pair<std::string, std::uint64_t>, std::map<int, double>> upload;
  for (const auto& s : summary) {
    if (s.metric == "upload_time_s") {
      upload[{s.policy, s.model_bytes}][s.n_fl] = s.mean;
    }
  }
  std::vector<BoundaryEntry> out;
  for (const auto& [key, cb] : upload) {
    const auto& [label, bytes] = key;
    if (label.rfind("cb-dedicated", 0) != 0) {
      continue;
    }
    auto ds_it = upload.find({"ds", bytes});
    if (ds_it == upload.end()) {
      continue;
    }
    int  up_to   = 0;
    bool all_win = true;
    bool prefix  = true;
    int  common  = 0;
    for (const auto& [n, v] : cb) {
      auto d = ds_it->second.find(n);
      if (d == ds_it->second.end()) {
        continue;
      }
      ++common;
      const bool win = v < d->second;
      all_win        = all_win && win;
      if (prefix && win) {
        up_to = n;
      } else {
        prefix = false;
      }
    }
    if (common == 0) {
      continue;
    }
    std::string verdict = all_win ? "YES" : (up_to > 0 ? "YES (up to " + std::to_string(up_to) + " UEs)" : "NO");
    out.push_back({bytes, label, verdict, up_to});
  }
  return out;
}

void write_boundary_csv(std::ostream& os, const std::vector<BoundaryEntry>& entries)
{
  os << "model_bytes,cb_policy,verdict,up_to_n_fl\n";
  for (const auto& e : entries) {
    os << e.model_bytes << ',' << e.cb_label << ',' << e.verdict << ',' << e.up_to_n_fl << '\n';
  }
}

void report_directory(const std::string& dir)
{
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "results.csv");
  if (!in) {
    throw std::runtime_error(dir + "/results.csv: cannot open");
  }
  const auto    summary = summarize_rows(read_results_csv(in));
  std::ofstream s(fs::path(dir) / "summary.csv");
  write_summary_csv(s, summary);
  std::ofstream b(fs::path(dir) / "boundary.csv");
  write_boundary_csv(b, boundary_report(summary));
}

} // namespace cbsim
