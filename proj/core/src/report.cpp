#include "facelab/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "facelab/error.hpp"
#include "json_util.hpp"

namespace facelab {

namespace {

constexpr int kReportVersion = 1;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

json parse_report(const std::string& text, const std::string& type) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("type", "") != type) {
    throw FormatError("expected a '" + type + "' report");
  }
  return j;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

}  // namespace

ReportFormat report_format_for(const std::filesystem::path& path) {
  return path.extension() == ".json" ? ReportFormat::Json : ReportFormat::Text;
}

std::string report_to_json(const VerificationReport& r) {
  const json j = {{"type", "verification"}, {"version", kReportVersion}, {"method", r.method},
                  {"benchmark", r.benchmark}, {"pair_count", r.pair_count}, {"folds", r.fold_accuracy},
                  {"thresholds", r.thresholds}, {"mean", r.mean}, {"std", r.std}};
  return j.dump(2) + "\n";
}

std::string report_to_json(const CMCReport& r) {
  json ranks = json::array();
  for (std::size_t k = 0; k < r.rank_acc.size(); ++k) {
    ranks.push_back({{"k", k + 1}, {"accuracy", r.rank_acc[k]}});
  }
  const json j = {{"type", "cmc"},
                  {"version", kReportVersion},
                  {"method", r.method},
                  {"benchmark", r.benchmark},
                  {"protocol", r.protocol},
                  {"kmax", r.rank_acc.size()},
                  {"probe_count", r.probe_count},
                  {"gallery_count", r.gallery_count},
                  {"distractor_count", r.distractor_count},
                  {"ranks", ranks}};
  return j.dump(2) + "\n";
}

VerificationReport verification_report_from_json(const std::string& text) {
  const json j = parse_report(text, "verification");
  try {
    VerificationReport r;
    r.method = j.at("method").get<std::string>();
    r.benchmark = j.at("benchmark").get<std::string>();
    r.pair_count = j.at("pair_count").get<std::size_t>();
    r.fold_accuracy = j.at("folds").get<std::vector<double>>();
    r.thresholds = j.at("thresholds").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed verification report: ") + e.what());
  }
}

CMCReport cmc_report_from_json(const std::string& text) {
  const json j = parse_report(text, "cmc");
  try {
    CMCReport r;
    r.method = j.at("method").get<std::string>();
    r.benchmark = j.at("benchmark").get<std::string>();
    r.protocol = j.at("protocol").get<std::string>();
    r.probe_count = j.at("probe_count").get<std::size_t>();
    r.gallery_count = j.at("gallery_count").get<std::size_t>();
    r.distractor_count = j.at("distractor_count").get<std::size_t>();
    for (const auto& row : j.at("ranks")) r.rank_acc.push_back(row.at("accuracy").get<double>());
    if (r.rank_acc.size() != j.at("kmax").get<std::size_t>()) {
      throw FormatError("cmc report: kmax disagrees with the number of rank rows");
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed cmc report: ") + e.what());
  }
}

std::string report_to_text(const VerificationReport& r) {
  ResultTable table;
  table.add(r);
  std::ostringstream out;
  out << table.render() << "\n";
  out << "fold  accuracy  threshold\n";
  for (std::size_t f = 0; f < r.fold_accuracy.size(); ++f) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%4zu  %8s  %9.5f\n", f, percent(r.fold_accuracy[f]).c_str(),
                  f < r.thresholds.size() ? r.thresholds[f] : 0.0);
    out << buf;
  }
  out << "mean " << percent(r.mean) << "  std " << percent(r.std) << "  pairs " << r.pair_count << "\n";
  return out.str();
}

std::string report_to_text(const CMCReport& r) {
  ResultTable table;
  table.add(r);
  std::ostringstream out;
  out << table.render() << "\n";
  out << "protocol " << r.protocol << "  probes " << r.probe_count << "  gallery " << r.gallery_count
      << "  distractors " << r.distractor_count << "\n";
  out << "rank  accuracy\n";
  for (std::size_t k = 0; k < r.rank_acc.size(); ++k) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%4zu  %8s\n", k + 1, percent(r.rank_acc[k]).c_str());
    out << buf;
  }
  return out.str();
}

void write_report(const VerificationReport& r, const std::filesystem::path& path, ReportFormat format) {
  spill(path, format == ReportFormat::Json ? report_to_json(r) : report_to_text(r));
}

void write_report(const CMCReport& r, const std::filesystem::path& path, ReportFormat format) {
  spill(path, format == ReportFormat::Json ? report_to_json(r) : report_to_text(r));
}

VerificationReport read_verification_report(const std::filesystem::path& path) {
  return verification_report_from_json(slurp(path));
}

CMCReport read_cmc_report(const std::filesystem::path& path) {
  return cmc_report_from_json(slurp(path));
}

void ResultTable::set(const std::string& method, const std::string& benchmark, double accuracy) {
  if (std::find(methods_.begin(), methods_.end(), method) == methods_.end()) methods_.push_back(method);
  if (std::find(benchmarks_.begin(), benchmarks_.end(), benchmark) == benchmarks_.end()) {
    benchmarks_.push_back(benchmark);
  }
  cells_[{method, benchmark}] = accuracy;
}

void ResultTable::add(const VerificationReport& r) {
  set(r.method.empty() ? "model" : r.method, r.benchmark.empty() ? "verify" : r.benchmark, r.mean);
}

void ResultTable::add(const CMCReport& r) {
  if (r.rank_acc.empty()) throw ValueError("cmc report has no ranks");
  const std::string bench = r.benchmark.empty() ? r.protocol : r.benchmark;
  set(r.method.empty() ? "model" : r.method, bench + " rank-1", r.rank_acc.front());
}

std::string ResultTable::render() const {
  std::size_t mw = 6;
  for (const auto& m : methods_) mw = std::max(mw, m.size());
  std::vector<std::size_t> widths;
  for (const auto& b : benchmarks_) widths.push_back(std::max<std::size_t>(b.size(), 6));
  std::ostringstream out;
  out << pad("Method", mw, false);
  for (std::size_t c = 0; c < benchmarks_.size(); ++c) out << "  " << pad(benchmarks_[c], widths[c], true);
  out << "\n" << std::string(mw, '-');
  for (std::size_t c = 0; c < benchmarks_.size(); ++c) out << "  " << std::string(widths[c], '-');
  out << "\n";
  for (const auto& m : methods_) {
    out << pad(m, mw, false);
    for (std::size_t c = 0; c < benchmarks_.size(); ++c) {
      const auto it = cells_.find({m, benchmarks_[c]});
      out << "  " << pad(it == cells_.end() ? "-" : percent(it->second), widths[c], true);
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace facelab
