#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "arhq/pipeline.hpp"

namespace arhq::io {

enum class ReportFormat { csv, json };

// Mean over layers of one (method, variant) pair. Infinite SNR rows are left
// out of the means and counted in excluded_inf.
struct AggregateRow {
  std::string method;
  Variant variant = Variant::raw;
  double snr_db = 0.0;
  double gain_db = 0.0;
  double objective = 0.0;
  double params_added = 0.0;
  std::size_t n_layers = 0;
  std::size_t excluded_inf = 0;
  std::string seed;  // shared seed, or "mixed"
};

std::vector<AggregateRow> aggregate(const std::vector<LayerReport>& reports);

// "inf" / "-inf" for infinities, otherwise printf-style with `fmt`.
std::string format_number(double v, const char* fmt);

inline constexpr std::string_view kCsvHeader =
    "layer,method,variant,snr_db,gain_db,objective,params_added,seed";

std::string render_csv(const std::vector<LayerReport>& reports);
nlohmann::json render_json(const std::vector<LayerReport>& reports);

void write_report(const std::vector<LayerReport>& reports, const std::filesystem::path& path,
                  ReportFormat format);

}  // namespace arhq::io
