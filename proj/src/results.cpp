#include "pgs/results.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"

namespace pgs {

namespace {

const char* kHeader =
    "task,method,p,epochs,T_test,m_traj,seed,score100,score50,d_best,mean_action_norm_first_step,"
    "mean_action_norm_last_step,wall_seconds";

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_num(const std::string& s) {
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  return parse_double(s);
}

void write_row(std::ostringstream& out, const Report& r, bool wall) {
  out << r.task << ',' << r.method << ',' << num(r.p) << ',' << r.epochs << ',' << r.test_length << ','
      << r.traj_count << ',' << r.seed << ',' << num(r.score100) << ',' << num(r.score50) << ',' << num(r.d_best)
      << ',' << num(r.action_norm_first) << ',' << num(r.action_norm_last) << ','
      << (wall ? num(r.wall_seconds) : "NA") << '\n';
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string results_csv(const ExperimentResult& result, const std::string& config_hash, bool record_wall_time) {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << '\n' << kHeader << '\n';
  for (const auto& r : result.reports) write_row(out, r, record_wall_time);
  for (const auto& r : result.aggregates) write_row(out, r, record_wall_time);
  return out.str();
}

std::vector<Report> parse_results_csv(const std::string& text) {
  std::vector<Report> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kHeader) throw FormatError("results CSV: unexpected header on line " + std::to_string(lineno));
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 13) throw FormatError("results CSV: line " + std::to_string(lineno) + " has wrong column count");
    try {
      Report r;
      r.task = f[0];
      r.method = f[1];
      r.p = parse_num(f[2]);
      r.epochs = std::stoi(f[3]);
      r.test_length = std::stoi(f[4]);
      r.traj_count = std::stoi(f[5]);
      r.seed = f[6];
      r.score100 = parse_num(f[7]);
      r.score50 = parse_num(f[8]);
      r.d_best = parse_num(f[9]);
      r.action_norm_first = parse_num(f[10]);
      r.action_norm_last = parse_num(f[11]);
      r.wall_seconds = parse_num(f[12]);
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw FormatError("results CSV: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header && !rows.empty()) throw FormatError("results CSV: missing header");
  return rows;
}

std::string action_norm_csv(const ExperimentResult& result, const std::string& config_hash) {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << '\n'
      << "task,method,p,T_test,m_traj,seed,step,mean_action_norm\n";
  auto emit = [&](const Report& r) {
    for (std::size_t k = 0; k < r.action_norm_trace.size(); ++k) {
      out << r.task << ',' << r.method << ',' << num(r.p) << ',' << r.test_length << ',' << r.traj_count << ','
          << r.seed << ',' << k + 1 << ',' << num(r.action_norm_trace[k]) << '\n';
    }
  };
  for (const auto& r : result.reports) emit(r);
  for (const auto& r : result.aggregates) emit(r);
  return out.str();
}

std::string report_table(const std::vector<Report>& rows) {
  std::vector<Report> seeds;
  for (const auto& r : rows) {
    if (r.seed != "agg") seeds.push_back(r);
  }
  if (seeds.empty()) return "no results\n";
  const std::vector<Report> agg = aggregate_reports(seeds);

  std::map<std::string, std::vector<const Report*>> by_task;
  std::vector<std::string> order;
  for (const auto& a : agg) {
    if (!by_task.count(a.task)) order.push_back(a.task);
    by_task[a.task].push_back(&a);
  }

  std::ostringstream out;
  char line[256];
  for (const auto& task : order) {
    const auto& group = by_task[task];
    const Report* best = group.front();
    for (const auto* a : group) {
      if (a->score100 > best->score100) best = a;
    }
    out << task << '\n';
    std::snprintf(line, sizeof(line), "  %-10s %5s %6s %6s %6s %4s  %-17s %-17s\n", "method", "p", "epochs", "T",
                  "m", "runs", "score100", "score50");
    out << line;
    double dbest = 0.0;
    for (const auto* a : group) {
      int runs = 0;
      for (const auto& s : seeds) {
        if (s.task == a->task && s.method == a->method && s.epochs == a->epochs && s.test_length == a->test_length &&
            s.traj_count == a->traj_count && ((std::isnan(s.p) && std::isnan(a->p)) || s.p == a->p)) {
          ++runs;
        }
      }
      const std::string s100 = fixed(a->score100) + " +- " + fixed(a->score100_std) + (a == best ? " *" : "");
      const std::string s50 = fixed(a->score50) + " +- " + fixed(a->score50_std);
      std::snprintf(line, sizeof(line), "  %-10s %5s %6d %6d %6d %4d  %-17s %-17s\n", a->method.c_str(),
                    num(a->p).c_str(), a->epochs, a->test_length, a->traj_count, runs, s100.c_str(), s50.c_str());
      out << line;
      dbest = a->d_best;
    }
    std::snprintf(line, sizeof(line), "  %-10s %5s %6s %6s %6s %4s  %-17s\n", "d_best", "", "", "", "", "",
                  fixed(dbest).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace pgs
