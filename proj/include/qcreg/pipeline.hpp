#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qcreg/diffgeo.hpp"
#include "qcreg/landmark.hpp"
#include "qcreg/mesh_io.hpp"
#include "qcreg/parameterization.hpp"
#include "qcreg/registration.hpp"
#include "qcreg/report.hpp"

namespace qcreg {

class PipelineError : public Error {
 public:
  using Error::Error;
};

/// Start and end of one landmark curve, as 3D points snapped to the nearest surface vertex.
struct EndpointPair {
  int id = 0;
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
};

/// Endpoints per surface name; "*" applies to every surface without its own entry.
struct EndpointTable {
  std::map<std::string, std::vector<EndpointPair>> by_surface;

  const std::vector<EndpointPair>& for_surface(const std::string& name) const {
    if (auto it = by_surface.find(name); it != by_surface.end()) return it->second;
    if (auto it = by_surface.find("*"); it != by_surface.end()) return it->second;
    throw PipelineError("no landmark endpoints for surface '" + name + "'");
  }
};

/// Text format, one curve per line: `<id> <surface|*> sx sy sz ex ey ez`; '#' starts a comment.
inline EndpointTable read_endpoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot read " + path.string());
  EndpointTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = line.substr(0, line.find('#'));
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    EndpointPair e;
    std::string surface;
    if (!(ls >> e.id)) continue;
    if (!(ls >> surface >> e.start.x() >> e.start.y() >> e.start.z() >> e.end.x() >> e.end.y() >> e.end.z()))
      throw PipelineError(path.string() + ":" + std::to_string(lineno) + ": expected '<id> <surface> sx sy sz ex ey ez'");
    table.by_surface[surface].push_back(e);
  }
  return table;
}

inline void write_endpoints(const std::filesystem::path& path, const EndpointTable& table) {
  std::ofstream out(path);
  if (!out) throw PipelineError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  for (const auto& [surface, pairs] : table.by_surface)
    for (const auto& e : pairs)
      out << e.id << ' ' << surface << ' ' << e.start.x() << ' ' << e.start.y() << ' ' << e.start.z() << ' '
          << e.end.x() << ' ' << e.end.y() << ' ' << e.end.z() << '\n';
}

struct PipelineParams {
  RegistrationParams registration;
  ParameterizeOptions parameterize;
  DetectOptions detect;
  int samples = 16;
  unsigned threads = 1;
  /// Stage outputs go under workdir/<subject>/ when set.
  std::filesystem::path workdir;
  bool resume = false;
  std::uint64_t seed = 0;
};

/// Control surface with its disk parameterization and landmark curves on the disk.
struct ControlSurface {
  std::string name;
  std::shared_ptr<const TriMesh> mesh;
  DiskParam param;
  std::map<int, std::vector<Vec2>> curves;
};

struct CurveRecord {
  int id = 0;
  double cost = 0.0;
  double start_snap = 0.0;
  double end_snap = 0.0;
  std::vector<Vec2> points;
};

struct StageTimes {
  double parameterize = 0.0;
  double curvature = 0.0;
  double detect = 0.0;
  double registration = 0.0;
  double pull_back = 0.0;
  double total = 0.0;
};

struct SubjectReport {
  std::string id;
  bool ok = false;
  std::string failed_stage;
  std::string error;
  double param_mean_mu = 0.0;
  double param_max_mu = 0.0;
  int param_iterations = 0;
  bool param_uniform_weights = false;
  std::vector<CurveRecord> curves;
  MetricsRecord metrics;
  std::size_t face_count = 0;
  /// |mu| sampled on the control's faces (centroids located in the registered subject disk).
  std::vector<double> control_face_mu;
  StageTimes times;
};

struct AggregateReport {
  std::size_t subjects = 0;
  std::size_t failed = 0;
  double mean_mu = 0.0;
  double sd_mu = 0.0;
  double landmark_error = 0.0;
  double sd_landmark_error = 0.0;
  double mean_time = 0.0;
  std::vector<long long> histogram = std::vector<long long>(kHistogramBins, 0);
  bool per_face_available = false;
  std::vector<double> per_face_mean;
  std::vector<double> per_face_sd;
};

struct PipelineReport {
  std::vector<SubjectReport> subjects;
  AggregateReport aggregate;
  /// Sum of per-subject stage times, and elapsed time of the whole batch.
  double subject_time_total = 0.0;
  double elapsed = 0.0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

inline int nearest_vertex3(const TriMesh& mesh, const Vec3& p) {
  int best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    const double e = (mesh.vertices()[v] - p).squaredNorm();
    if (e < d) {
      d = e;
      best = static_cast<int>(v);
    }
  }
  return best;
}

inline std::vector<CurveRecord> detect_curves(const PlanarMesh& disk, const CurvatureField& H,
                                              const std::vector<EndpointPair>& endpoints, const PipelineParams& p) {
  std::vector<CurveRecord> out;
  for (const auto& e : endpoints) {
    const Vec2 s = disk.uv()[nearest_vertex3(disk.base(), e.start)];
    const Vec2 t = disk.uv()[nearest_vertex3(disk.base(), e.end)];
    const DetectedCurve c = detect_landmark_curve(disk, H, s, t, p.detect);
    out.push_back({e.id, c.cost, c.start_snap, c.end_snap, resample_curve(c.points, p.samples)});
  }
  return out;
}

inline void write_curvature(const std::filesystem::path& path, const CurvatureField& H) {
  std::ofstream out(path);
  if (!out) throw PipelineError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  for (double h : H.H) out << h << '\n';
}

}  // namespace detail

/// Parameterizes the control and detects its landmark curves.
inline ControlSurface prepare_control(const std::string& name, const TriMesh& mesh, const EndpointTable& endpoints,
                                      const PipelineParams& p) {
  auto base = std::make_shared<const TriMesh>(mesh);
  ControlSurface c{name, base, disk_conformal_parameterize(*base, p.parameterize), {}};
  const CurvatureField H = mean_curvature(*c.mesh);
  for (const auto& rec : detail::detect_curves(c.param.planar, H, endpoints.for_surface(name), p))
    c.curves[rec.id] = rec.points;
  return c;
}

struct PairOutcome {
  std::optional<TriMesh> registered;
  SubjectReport report;
};

/// parameterize -> curvature -> detect -> register -> pull back onto the control surface.
/// Failures are recorded in the report with the stage name instead of being thrown.
inline PairOutcome run_pair(const std::string& id, const TriMesh& subject, const ControlSurface& control,
                            const EndpointTable& endpoints, const PipelineParams& p) {
  using detail::Clock;
  PairOutcome out;
  SubjectReport& rep = out.report;
  rep.id = id;
  const auto t_all = Clock::now();
  const std::filesystem::path dir = p.workdir.empty() ? std::filesystem::path() : p.workdir / id;
  auto artifact = [&](const char* name) { return dir / name; };
  auto reuse = [&](const char* name) { return p.resume && !dir.empty() && std::filesystem::exists(artifact(name)); };
  std::string stage = "setup";
  try {
    if (!dir.empty()) std::filesystem::create_directories(dir);
    const auto base = std::make_shared<const TriMesh>(subject);

    stage = "parameterize";
    auto t = Clock::now();
    std::optional<PlanarMesh> disk;
    if (reuse("disk.obj") && reuse("parameterization.json")) {
      disk.emplace(base, load_planar_mesh(artifact("disk.obj")).uv());
      const Json j = read_json(artifact("parameterization.json"));
      rep.param_mean_mu = j.at("mean_mu").get<double>();
      rep.param_max_mu = j.at("max_mu").get<double>();
      rep.param_iterations = j.at("iterations").get<int>();
      rep.param_uniform_weights = j.at("uniform_weights").get<bool>();
    } else {
      const DiskParam dp = disk_conformal_parameterize(*base, p.parameterize);
      disk.emplace(dp.planar);
      rep.param_mean_mu = dp.history.back().mean_abs_mu;
      rep.param_max_mu = dp.history.back().max_abs_mu;
      rep.param_iterations = static_cast<int>(dp.history.size()) - 1;
      rep.param_uniform_weights = dp.used_uniform_weights;
      if (!dir.empty()) {
        write_obj(artifact("disk.obj"), *disk);
        write_json(artifact("parameterization.json"), Json{{"mean_mu", rep.param_mean_mu},
                                                           {"max_mu", rep.param_max_mu},
                                                           {"iterations", rep.param_iterations},
                                                           {"uniform_weights", rep.param_uniform_weights}});
      }
    }
    rep.times.parameterize = detail::seconds_since(t);

    stage = "curvature";
    t = Clock::now();
    const CurvatureField H = mean_curvature(*base);
    if (!dir.empty() && !reuse("curvature.txt")) {
      detail::write_curvature(artifact("curvature.txt"), H);
      write_pgm(artifact("curvature.pgm"), curvature_image(*disk, H, 256));
    }
    rep.times.curvature = detail::seconds_since(t);

    stage = "detect";
    t = Clock::now();
    LandmarkSet lm;
    if (reuse("landmarks.txt")) {
      lm = read_landmarks(artifact("landmarks.txt"));
      for (const auto& c : lm.curves) rep.curves.push_back({c.id, 0.0, 0.0, 0.0, c.source});
    } else {
      rep.curves = detail::detect_curves(*disk, H, endpoints.for_surface(id), p);
      for (const auto& rec : rep.curves) {
        const auto it = control.curves.find(rec.id);
        if (it == control.curves.end()) throw PipelineError("control has no curve " + std::to_string(rec.id));
        if (it->second.size() != rec.points.size()) throw PipelineError("curve sample counts differ");
        LandmarkCurve c;
        c.id = rec.id;
        c.source = rec.points;
        c.target = it->second;
        c.start = c.source.front();
        c.end = c.source.back();
        lm.curves.push_back(std::move(c));
      }
      if (!dir.empty()) write_landmarks(artifact("landmarks.txt"), lm);
    }
    rep.times.detect = detail::seconds_since(t);

    stage = "register";
    t = Clock::now();
    std::optional<PlanarMesh> mapped;
    BeltramiField mu;
    if (reuse("registered_disk.obj") && reuse("mu.csv") && reuse("metrics.json")) {
      mapped.emplace(base, load_planar_mesh(artifact("registered_disk.obj")).uv());
      mu = read_mu_csv(artifact("mu.csv"));
      rep.metrics = read_report(artifact("metrics.json"));
    } else {
      const RegistrationResult r = register_disk(*disk, lm, p.registration);
      mapped.emplace(r.map);
      mu = r.mu;
      rep.metrics = make_record(r, p.registration, p.seed);
      if (!dir.empty()) {
        write_obj(artifact("registered_disk.obj"), *mapped);
        write_mu_csv(artifact("mu.csv"), mu);
        write_report(rep.metrics, artifact("metrics.json"));
      }
    }
    rep.face_count = mu.size();
    rep.times.registration = detail::seconds_since(t);

    stage = "pull_back";
    t = Clock::now();
    // boundary vertices sit on the circle, which bulges past the control's boundary chords
    const double snap = mean_edge_length(control.param.planar);
    std::vector<Vec3> x = pull_back_to_surface(control.param, mapped->uv(), snap);
    out.registered.emplace(std::move(x), subject.faces());
    if (!dir.empty()) write_obj(artifact("registered.obj"), *out.registered);
    const TriangleLocator loc(*mapped);
    for (std::size_t f = 0; f < control.param.planar.num_faces(); ++f) {
      const auto tri = control.param.planar.triangle(f);
      rep.control_face_mu.push_back(std::abs(mu[loc.nearest((tri[0] + tri[1] + tri[2]) / 3.0).face]));
    }
    rep.times.pull_back = detail::seconds_since(t);
    rep.ok = true;
  } catch (const std::exception& e) {
    rep.ok = false;
    rep.failed_stage = stage;
    rep.error = e.what();
    out.registered.reset();
  }
  rep.times.total = detail::seconds_since(t_all);
  return out;
}

/// Table-shaped statistics over successful subjects. SDs are population SDs.
inline AggregateReport aggregate(const std::vector<SubjectReport>& reports) {
  AggregateReport a;
  std::vector<const SubjectReport*> ok;
  for (const auto& r : reports) (r.ok ? ok.push_back(&r) : void(++a.failed));
  a.subjects = ok.size();
  if (ok.empty()) return a;
  double faces = 0.0, sum = 0.0, sum2 = 0.0;
  for (const auto* r : ok) {
    const double n = static_cast<double>(r->face_count);
    faces += n;
    sum += n * r->metrics.mean_mu;
    sum2 += n * (r->metrics.sd_mu * r->metrics.sd_mu + r->metrics.mean_mu * r->metrics.mean_mu);
    a.landmark_error += r->metrics.landmark_rmse;
    a.mean_time += r->times.total;
    for (int b = 0; b < kHistogramBins; ++b) a.histogram[b] += r->metrics.histogram[b];
  }
  const double k = static_cast<double>(ok.size());
  a.mean_mu = faces > 0.0 ? sum / faces : 0.0;
  a.sd_mu = faces > 0.0 ? std::sqrt(std::max(0.0, sum2 / faces - a.mean_mu * a.mean_mu)) : 0.0;
  a.landmark_error /= k;
  a.mean_time /= k;
  double var = 0.0;
  for (const auto* r : ok) var += (r->metrics.landmark_rmse - a.landmark_error) * (r->metrics.landmark_rmse - a.landmark_error);
  a.sd_landmark_error = std::sqrt(var / k);

  const std::size_t nf = ok.front()->control_face_mu.size();
  a.per_face_available = nf > 0 && std::all_of(ok.begin(), ok.end(), [nf](const SubjectReport* r) {
    return r->control_face_mu.size() == nf;
  });
  if (a.per_face_available) {
    a.per_face_mean.assign(nf, 0.0);
    a.per_face_sd.assign(nf, 0.0);
    for (std::size_t f = 0; f < nf; ++f) {
      for (const auto* r : ok) a.per_face_mean[f] += r->control_face_mu[f];
      a.per_face_mean[f] /= k;
      for (const auto* r : ok) {
        const double d = r->control_face_mu[f] - a.per_face_mean[f];
        a.per_face_sd[f] += d * d;
      }
      a.per_face_sd[f] = std::sqrt(a.per_face_sd[f] / k);
    }
  }
  return a;
}

struct SubjectInput {
  std::string id;
  TriMesh mesh;
};

/// Registers every subject to the control, `threads` at a time; reports are sorted by id.
inline PipelineReport run_batch(const ControlSurface& control, const std::vector<SubjectInput>& subjects,
                                const EndpointTable& endpoints, const PipelineParams& p) {
  const auto t0 = detail::Clock::now();
  PipelineReport rep;
  rep.subjects.resize(subjects.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < subjects.size(); i = next++)
      rep.subjects[i] = run_pair(subjects[i].id, subjects[i].mesh, control, endpoints, p).report;
  };
  const unsigned n = std::max(1u, std::min<unsigned>(p.threads, static_cast<unsigned>(subjects.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::sort(rep.subjects.begin(), rep.subjects.end(),
            [](const SubjectReport& a, const SubjectReport& b) { return a.id < b.id; });
  rep.aggregate = aggregate(rep.subjects);
  for (const auto& s : rep.subjects) rep.subject_time_total += s.times.total;
  rep.elapsed = detail::seconds_since(t0);
  return rep;
}

inline Json to_json(const SubjectReport& s) {
  Json curves = Json::array();
  for (const auto& c : s.curves) {
    Json pts = Json::array();
    for (const auto& q : c.points) pts.push_back({q.x(), q.y()});
    curves.push_back({{"id", c.id}, {"cost", c.cost}, {"start_snap", c.start_snap}, {"end_snap", c.end_snap}, {"points", pts}});
  }
  Json j{{"id", s.id},
         {"ok", s.ok},
         {"parameterization",
          {{"mean_mu", s.param_mean_mu},
           {"max_mu", s.param_max_mu},
           {"iterations", s.param_iterations},
           {"uniform_weights", s.param_uniform_weights}}},
         {"curves", curves},
         {"face_count", s.face_count},
         {"times",
          {{"parameterize", s.times.parameterize},
           {"curvature", s.times.curvature},
           {"detect", s.times.detect},
           {"register", s.times.registration},
           {"pull_back", s.times.pull_back},
           {"total", s.times.total}}}};
  if (s.ok) j["metrics"] = to_json(s.metrics);
  else j["error"] = {{"stage", s.failed_stage}, {"message", s.error}};
  return j;
}

inline Json to_json(const PipelineReport& r) {
  Json subjects = Json::array();
  for (const auto& s : r.subjects) subjects.push_back(to_json(s));
  const AggregateReport& a = r.aggregate;
  Json agg{{"subjects", a.subjects},
           {"failed", a.failed},
           {"mean_mu", a.mean_mu},
           {"sd_mu", a.sd_mu},
           {"landmark_error", a.landmark_error},
           {"sd_landmark_error", a.sd_landmark_error},
           {"mean_time", a.mean_time},
           {"histogram", a.histogram},
           {"sd_convention", "population"},
           {"per_face_available", a.per_face_available}};
  if (a.per_face_available) {
    agg["per_face_mean_mu"] = a.per_face_mean;
    agg["per_face_sd_mu"] = a.per_face_sd;
  }
  return Json{{"schema_version", kReportSchemaVersion},
              {"software_version", QCREG_VERSION},
              {"generator", Rng::kName},
              {"subjects", subjects},
              {"aggregate", agg},
              {"subject_time_total", r.subject_time_total},
              {"elapsed", r.elapsed}};
}

inline SummaryRow summary_row(const AggregateReport& a, const std::string& method) {
  return {method, a.mean_mu, a.sd_mu, a.landmark_error, a.sd_landmark_error, a.mean_time};
}

}  // namespace qcreg
