#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "qcreg/generators.hpp"
#include "qcreg/registration.hpp"

#ifndef QCREG_VERSION
#define QCREG_VERSION "1.0.0"
#endif

namespace qcreg {

class ReportError : public Error {
 public:
  using Error::Error;
};

using Json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;

/// Serializable registration outcome. SD values are population SDs.
struct MetricsRecord {
  int schema_version = kReportSchemaVersion;
  std::string software_version = QCREG_VERSION;
  std::string generator = Rng::kName;
  std::uint64_t seed = 0;
  double mean_mu = 0.0;
  double sd_mu = 0.0;
  double landmark_rmse = 0.0;
  double wall_time = 0.0;
  std::vector<long long> histogram = std::vector<long long>(kHistogramBins, 0);
  std::map<std::string, double> parameters;
  std::vector<LossTerms> loss_trace;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;

  bool operator==(const MetricsRecord&) const = default;
};

inline std::map<std::string, double> parameter_echo(const RegistrationParams& p) {
  return {{"alpha", p.alpha},
          {"beta", p.beta},
          {"gamma", p.gamma},
          {"eta", p.eta},
          {"rho_boundary", p.rho_boundary},
          {"max_outer", static_cast<double>(p.max_outer)},
          {"tol", p.tol},
          {"smoothing_steps", static_cast<double>(p.smoothing_steps)}};
}

inline MetricsRecord make_record(const RegistrationResult& r, const RegistrationParams& p, std::uint64_t seed = 0) {
  MetricsRecord m;
  m.seed = seed;
  m.mean_mu = r.metrics.mean_mu;
  m.sd_mu = r.metrics.sd_mu;
  m.landmark_rmse = r.metrics.landmark_rmse;
  m.wall_time = r.metrics.wall_time;
  m.histogram = r.metrics.histogram;
  m.parameters = parameter_echo(p);
  m.loss_trace = r.loss_trace;
  m.iterations = r.iterations;
  m.converged = r.converged;
  m.warnings = r.warnings;
  return m;
}

namespace detail {

inline double finite(double v, const char* name) {
  if (!std::isfinite(v)) throw ReportError(std::string("non-finite value in report field ") + name);
  return v;
}

}  // namespace detail

inline Json to_json(const MetricsRecord& m) {
  Json trace = Json::array();
  for (const auto& l : m.loss_trace)
    trace.push_back({{"mu", detail::finite(l.mu, "loss_trace.mu")},
                     {"grad_mu", detail::finite(l.grad_mu, "loss_trace.grad_mu")},
                     {"landmark", detail::finite(l.landmark, "loss_trace.landmark")},
                     {"total", detail::finite(l.total, "loss_trace.total")}});
  Json params = Json::object();
  for (const auto& [k, v] : m.parameters) params[k] = detail::finite(v, "parameters");
  return Json{{"schema_version", m.schema_version},
              {"software_version", m.software_version},
              {"generator", m.generator},
              {"seed", m.seed},
              {"mean_mu", detail::finite(m.mean_mu, "mean_mu")},
              {"sd_mu", detail::finite(m.sd_mu, "sd_mu")},
              {"sd_convention", "population"},
              {"landmark_rmse", detail::finite(m.landmark_rmse, "landmark_rmse")},
              {"wall_time", detail::finite(m.wall_time, "wall_time")},
              {"histogram", m.histogram},
              {"histogram_range", {0.0, 1.0}},
              {"parameters", params},
              {"loss_trace", trace},
              {"iterations", m.iterations},
              {"converged", m.converged},
              {"warnings", m.warnings}};
}

inline void check_schema(const Json& j) {
  if (!j.is_object() || !j.contains("schema_version")) throw ReportError("report has no schema_version");
  const int v = j.at("schema_version").get<int>();
  if (v != kReportSchemaVersion)
    throw ReportError("report schema version " + std::to_string(v) + " is not supported (this build reads version " +
                      std::to_string(kReportSchemaVersion) + ")");
}

inline MetricsRecord metrics_from_json(const Json& j) {
  check_schema(j);
  MetricsRecord m;
  try {
    m.software_version = j.at("software_version").get<std::string>();
    m.generator = j.at("generator").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.mean_mu = j.at("mean_mu").get<double>();
    m.sd_mu = j.at("sd_mu").get<double>();
    m.landmark_rmse = j.at("landmark_rmse").get<double>();
    m.wall_time = j.at("wall_time").get<double>();
    m.histogram = j.at("histogram").get<std::vector<long long>>();
    m.parameters = j.at("parameters").get<std::map<std::string, double>>();
    for (const auto& l : j.at("loss_trace"))
      m.loss_trace.push_back({l.at("mu").get<double>(), l.at("grad_mu").get<double>(), l.at("landmark").get<double>(),
                              l.at("total").get<double>()});
    m.iterations = j.at("iterations").get<int>();
    m.converged = j.at("converged").get<bool>();
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  }
  return m;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReportError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw ReportError("write failed for " + path.string());
}

inline Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ReportError(path.string() + ": " + e.what());
  }
}

inline void write_report(const MetricsRecord& m, const std::filesystem::path& path) { write_json(path, to_json(m)); }
inline MetricsRecord read_report(const std::filesystem::path& path) { return metrics_from_json(read_json(path)); }

/// One row of the summary table.
struct SummaryRow {
  std::string method;
  double mean_mu = 0.0;
  double sd_mu = 0.0;
  double landmark_error = 0.0;
  double sd_landmark_error = 0.0;
  double time_seconds = 0.0;
};

inline void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ReportError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  out << "method,mean_mu,sd_mu,landmark_error,sd_landmark_error,time_seconds\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.mean_mu << ',' << r.sd_mu << ',' << r.landmark_error << ',' << r.sd_landmark_error
        << ',' << r.time_seconds << '\n';
}

/// Per-face Beltrami coefficients as `face_index,re_mu,im_mu` lines under that header.
inline void write_mu_csv(const std::filesystem::path& path, const BeltramiField& mu) {
  std::ofstream out(path);
  if (!out) throw ReportError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(17) << "face_index,re_mu,im_mu\n";
  for (std::size_t f = 0; f < mu.size(); ++f) out << f << ',' << mu[f].real() << ',' << mu[f].imag() << '\n';
}

inline BeltramiField read_mu_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("face_index", 0) != 0) throw ReportError(path.string() + ": missing header");
  BeltramiField mu;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    std::size_t f = 0;
    double re = 0.0, im = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ls >> f >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',' || f != mu.size())
      throw ReportError(path.string() + ":" + std::to_string(lineno) + ": malformed or out-of-order row");
    mu.mu.emplace_back(re, im);
  }
  return mu;
}

}  // namespace qcreg
