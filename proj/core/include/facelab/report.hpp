#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "facelab/eval.hpp"

namespace facelab {

enum class ReportFormat { Json, Text };

// Json for a ".json" extension, Text otherwise.
ReportFormat report_format_for(const std::filesystem::path& path);

std::string report_to_json(const VerificationReport& report);
std::string report_to_json(const CMCReport& report);
VerificationReport verification_report_from_json(const std::string& text);
CMCReport cmc_report_from_json(const std::string& text);

std::string report_to_text(const VerificationReport& report);
std::string report_to_text(const CMCReport& report);

void write_report(const VerificationReport& report, const std::filesystem::path& path,
                  ReportFormat format);
void write_report(const CMCReport& report, const std::filesystem::path& path, ReportFormat format);
VerificationReport read_verification_report(const std::filesystem::path& path);
CMCReport read_cmc_report(const std::filesystem::path& path);

// Methods as rows, benchmarks as columns; cells are percentages.
class ResultTable {
 public:
  void set(const std::string& method, const std::string& benchmark, double accuracy);
  void add(const VerificationReport& report);
  // Adds the rank-1 accuracy.
  void add(const CMCReport& report);
  std::string render() const;

 private:
  std::vector<std::string> methods_;
  std::vector<std::string> benchmarks_;
  std::map<std::pair<std::string, std::string>, double> cells_;
};

}  // namespace facelab
