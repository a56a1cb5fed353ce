#include "arhq/report.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "arhq/config.hpp"
#include "arhq/error.hpp"
#include "arhq/tensor_file.hpp"

namespace arhq::io {

namespace {

using nlohmann::json;

json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

std::string format_params(double v) {
  if (v == std::floor(v)) return format_number(v, "%.0f");
  return format_number(v, "%.6f");
}

std::string aggregate_label(const AggregateRow& row) {
  if (row.excluded_inf == 0) return "average";
  return "average[excluded_inf=" + std::to_string(row.excluded_inf) + "]";
}

}  // namespace

std::string format_number(double v, const char* fmt) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::vector<AggregateRow> aggregate(const std::vector<LayerReport>& reports) {
  std::vector<AggregateRow> out;
  std::map<std::pair<std::string, Variant>, std::size_t> index;
  // Sums over finite rows; a key whose rows are all infinite reports inf.
  struct Sums {
    double snr = 0, gain = 0, objective = 0, params = 0;
    std::size_t finite = 0, gain_finite = 0;
    bool mixed_seed = false;
    std::uint64_t seed = 0;
  };
  std::vector<Sums> sums;

  for (const LayerReport& rep : reports) {
    for (const MethodResult& r : rep.rows) {
      const auto key = std::make_pair(r.method, r.variant);
      auto it = index.find(key);
      if (it == index.end()) {
        it = index.emplace(key, out.size()).first;
        AggregateRow row;
        row.method = r.method;
        row.variant = r.variant;
        out.push_back(row);
        Sums s;
        s.seed = rep.seed;
        sums.push_back(s);
      }
      AggregateRow& agg = out[it->second];
      Sums& s = sums[it->second];
      ++agg.n_layers;
      s.objective += r.objective;
      s.params += static_cast<double>(r.params_added);
      if (rep.seed != s.seed) s.mixed_seed = true;
      if (std::isfinite(r.snr_db)) {
        s.snr += r.snr_db;
        ++s.finite;
      } else {
        ++agg.excluded_inf;
      }
      if (std::isfinite(r.gain_db)) {
        s.gain += r.gain_db;
        ++s.gain_finite;
      }
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Sums& s = sums[i];
    AggregateRow& agg = out[i];
    const auto n = static_cast<double>(agg.n_layers);
    agg.snr_db = s.finite > 0 ? s.snr / static_cast<double>(s.finite)
                              : std::numeric_limits<double>::infinity();
    agg.gain_db = s.gain_finite > 0 ? s.gain / static_cast<double>(s.gain_finite)
                                    : std::numeric_limits<double>::infinity();
    agg.objective = s.objective / n;
    agg.params_added = s.params / n;
    agg.seed = s.mixed_seed ? "mixed" : std::to_string(s.seed);
  }
  return out;
}

std::string render_csv(const std::vector<LayerReport>& reports) {
  if (reports.empty()) throw ParameterError("write_report: no layer reports");
  std::string out(kCsvHeader);
  out += '\n';
  for (const LayerReport& rep : reports) {
    for (const MethodResult& r : rep.rows) {
      out += rep.layer + ',' + r.method + ',' + std::string(to_string(r.variant)) + ',' +
             format_number(r.snr_db, "%.6f") + ',' + format_number(r.gain_db, "%+.6f") + ',' +
             format_number(r.objective, "%.12g") + ',' + std::to_string(r.params_added) + ',' +
             std::to_string(rep.seed) + '\n';
    }
  }
  for (const AggregateRow& a : aggregate(reports)) {
    out += aggregate_label(a) + ',' + a.method + ',' + std::string(to_string(a.variant)) + ',' +
           format_number(a.snr_db, "%.6f") + ',' + format_number(a.gain_db, "%+.6f") + ',' +
           format_number(a.objective, "%.12g") + ',' + format_params(a.params_added) + ',' +
           a.seed + '\n';
  }
  return out;
}

json render_json(const std::vector<LayerReport>& reports) {
  if (reports.empty()) throw ParameterError("write_report: no layer reports");
  json layers = json::array();
  for (const LayerReport& rep : reports) {
    json rows = json::array();
    for (const MethodResult& r : rep.rows) {
      rows.push_back(json{{"method", r.method},
                          {"variant", std::string(to_string(r.variant))},
                          {"snr_db", number(r.snr_db)},
                          {"gain_db", number(r.gain_db)},
                          {"objective", number(r.objective)},
                          {"params_added", r.params_added},
                          {"overhead_ratio", number(r.overhead_ratio)},
                          {"clipping_objective", number(r.clipping_objective)},
                          {"a_absmax", number(r.a_absmax)},
                          {"b_absmax", number(r.b_absmax)},
                          {"w_res_absmax", number(r.w_res_absmax)}});
    }
    layers.push_back(json{{"layer", rep.layer},
                          {"seed", rep.seed},
                          {"rank", rep.rank},
                          {"d_in", rep.d_in},
                          {"d_out", rep.d_out},
                          {"config", to_json(rep.config)},
                          {"rows", rows}});
  }
  json agg = json::array();
  for (const AggregateRow& a : aggregate(reports)) {
    agg.push_back(json{{"layer", aggregate_label(a)},
                       {"method", a.method},
                       {"variant", std::string(to_string(a.variant))},
                       {"snr_db", number(a.snr_db)},
                       {"gain_db", number(a.gain_db)},
                       {"objective", number(a.objective)},
                       {"params_added", number(a.params_added)},
                       {"n_layers", a.n_layers},
                       {"excluded_inf", a.excluded_inf},
                       {"seed", a.seed}});
  }
  return json{{"format", "arhq-report-v1"}, {"layers", layers}, {"aggregate", agg}};
}

void write_report(const std::vector<LayerReport>& reports, const std::filesystem::path& path,
                  ReportFormat format) {
  if (format == ReportFormat::csv) {
    write_file(path, render_csv(reports));
  } else {
    write_file(path, render_json(reports).dump(2) + "\n");
  }
}

}  // namespace arhq::io
