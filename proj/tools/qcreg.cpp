#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qcreg/qcreg.hpp"

using namespace qcreg;
namespace fs = std::filesystem;

namespace {

Vec2 parse_point(const std::string& s) {
  std::istringstream in(s);
  in.imbue(std::locale::classic());
  double x = 0.0, y = 0.0;
  char comma = 0;
  if (!(in >> x >> comma >> y) || comma != ',') throw Error("expected a point as x,y but got '" + s + "'");
  return {x, y};
}

void add_registration_flags(CLI::App* cmd, RegistrationParams& p) {
  cmd->add_option("--alpha", p.alpha, "weight of the mean |mu|^2 term")->capture_default_str();
  cmd->add_option("--beta", p.beta, "weight of the |grad mu|^2 term")->capture_default_str();
  cmd->add_option("--gamma", p.gamma, "landmark weight")->capture_default_str();
  cmd->add_option("--eta", p.eta, "landmark normalization")->capture_default_str();
  cmd->add_option("--max-outer", p.max_outer, "outer iterations")->capture_default_str();
  cmd->add_option("--tol", p.tol, "relative loss decrease to stop at")->capture_default_str();
}

Json stats_json(const DiskParam& d) {
  Json hist = Json::array();
  for (std::size_t i = 0; i < d.history.size(); ++i)
    hist.push_back({{"iteration", i}, {"mean_mu", d.history[i].mean_abs_mu}, {"max_mu", d.history[i].max_abs_mu}});
  return Json{{"schema_version", kReportSchemaVersion},
              {"software_version", QCREG_VERSION},
              {"iterations", hist},
              {"converged", d.converged},
              {"uniform_weights", d.used_uniform_weights}};
}

int parameterize(const fs::path& in, const fs::path& out, const fs::path& report, const ParameterizeOptions& opt) {
  const TriMesh mesh = load_mesh(in);
  const DiskParam d = disk_conformal_parameterize(mesh, opt);
  write_obj(out, d.planar);
  if (!report.empty()) write_json(report, stats_json(d));
  std::printf("mean |mu| %.6g  max |mu| %.6g  (%zu iterations)\n", d.history.back().mean_abs_mu,
              d.history.back().max_abs_mu, d.history.size() - 1);
  return 0;
}

int lbs(const fs::path& mesh_path, const fs::path& mu_path, const std::string& bc_name, const fs::path& out) {
  const PlanarMesh disk = load_planar_mesh(mesh_path);
  const BeltramiField mu = read_mu_csv(mu_path);
  const BoundaryCondition bc = bc_name == "circle" ? BoundaryCondition::circle(disk) : BoundaryCondition::fixed_boundary(disk);
  const LbsResult r = lbs_solve(disk, mu, bc);
  write_obj(out, r.map);
  std::printf("%zu flipped faces\n", r.flipped_faces.size());
  return r.flipped_faces.empty() ? 0 : 2;
}

int register_cmd(const fs::path& disk_path, const fs::path& lm_path, const RegistrationParams& p, const fs::path& out,
                 const fs::path& mu_out, const fs::path& report) {
  const PlanarMesh disk = load_planar_mesh(disk_path);
  const RegistrationResult r = register_disk(disk, read_landmarks(lm_path), p);
  write_obj(out, r.map);
  if (!mu_out.empty()) write_mu_csv(mu_out, r.mu);
  if (!report.empty()) write_report(make_record(r, p), report);
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("mean |mu| %.6g  sd %.6g  landmark rmse %.6g  %.2f s\n", r.metrics.mean_mu, r.metrics.sd_mu,
              r.metrics.landmark_rmse, r.metrics.wall_time);
  return 0;
}

int synth(const SynthConfig& cfg, int rings, int curves, int samples, const std::string& prefix) {
  const PlanarMesh disk = unit_disk_mesh(rings, 0.2, cfg.seed);
  const LandmarkSet lm = random_landmarks(cfg.seed + 500, curves, samples);
  const double angle = cfg.rotation ? synth_rotation_angle(cfg.seed) : 0.0;
  const Distortion d = distort_disk(disk, random_smooth_mu(cfg), lm, angle);
  LandmarkSet pair = lm;
  for (std::size_t c = 0; c < pair.curves.size(); ++c) pair.curves[c].target = d.landmarks.curves[c].source;
  write_obj(prefix + "_template.obj", disk);
  write_obj(prefix + "_distorted.obj", d.mesh);
  write_mu_csv(prefix + "_mu.csv", d.mu);
  write_landmarks(prefix + "_landmarks.txt", pair);
  std::printf("wrote %s_{template,distorted}.obj %s_mu.csv %s_landmarks.txt\n", prefix.c_str(), prefix.c_str(),
              prefix.c_str());
  return 0;
}

int curvature(const fs::path& in, const fs::path& out, const fs::path& image, int size) {
  const PlanarMesh disk = load_planar_mesh(in);
  const CurvatureField H = mean_curvature(disk.base());
  std::ofstream f = detail::open_for_write(out);
  f << std::setprecision(17);
  for (double h : H.H) f << h << '\n';
  if (!image.empty()) write_pgm(image, curvature_image(disk, H, size));
  return 0;
}

int detect(const fs::path& in, const std::vector<std::string>& starts, const std::vector<std::string>& ends, int samples,
           double eps, const fs::path& out) {
  if (starts.size() != ends.size()) throw Error("--start and --end must be given the same number of times");
  const PlanarMesh disk = load_planar_mesh(in);
  const CurvatureField H = mean_curvature(disk.base());
  LandmarkSet lm;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const DetectedCurve c = detect_landmark_curve(disk, H, parse_point(starts[k]), parse_point(ends[k]), {eps});
    LandmarkCurve curve;
    curve.id = static_cast<int>(k);
    curve.source = resample_curve(c.points, samples);
    curve.target = curve.source;
    curve.start = curve.source.front();
    curve.end = curve.source.back();
    lm.curves.push_back(std::move(curve));
    std::printf("curve %zu: %zu vertices, cost %.6g, snap %.3g / %.3g\n", k, c.vertices.size(), c.cost, c.start_snap,
                c.end_snap);
  }
  write_landmarks(out, lm);
  return 0;
}

int compress_cmd(const fs::path& disk_path, const fs::path& mu_path, int k, int n, const fs::path& out) {
  const PlanarMesh disk = load_planar_mesh(disk_path);
  const BeltramiField mu = read_mu_csv(mu_path);
  const GridField g = mu_to_grid(disk, mu, n);
  const BeltramiField c = grid_to_mu(compress(g, k), disk);
  double num = 0.0, den = 0.0;
  for (std::size_t f = 0; f < mu.size(); ++f) {
    num += std::norm(mu[f] - c[f]);
    den += std::norm(mu[f]);
  }
  write_mu_csv(out, c);
  std::printf("kept %d x %d of %d x %d coefficients, relative error %.4g\n", 2 * k, 2 * k, n, n,
              den > 0 ? std::sqrt(num / den) : 0.0);
  return 0;
}

int pipeline(const fs::path& control_path, const std::vector<fs::path>& subject_paths, const fs::path& endpoints,
             const fs::path& report, const fs::path& summary, PipelineParams p) {
  const EndpointTable table = read_endpoints(endpoints);
  const ControlSurface control = prepare_control(control_path.stem().string(), load_mesh(control_path), table, p);
  std::vector<SubjectInput> subjects;
  for (const auto& s : subject_paths) subjects.push_back({s.stem().string(), load_mesh(s)});
  const PipelineReport r = run_batch(control, subjects, table, p);
  write_json(report, to_json(r));
  if (!summary.empty()) write_summary_csv(summary, {summary_row(r.aggregate, "qc-registration")});
  for (const auto& s : r.subjects)
    if (!s.ok) std::fprintf(stderr, "%s failed in %s: %s\n", s.id.c_str(), s.failed_stage.c_str(), s.error.c_str());
  const AggregateReport& a = r.aggregate;
  std::printf("%zu registered, %zu failed; mean |mu| %.4g (sd %.4g), landmark error %.4g (sd %.4g), %.2f s each\n",
              a.subjects, a.failed, a.mean_mu, a.sd_mu, a.landmark_error, a.sd_landmark_error, a.mean_time);
  return a.failed == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark-constrained quasi-conformal registration of disk-topology meshes"};
  app.set_version_flag("--version", QCREG_VERSION);
  app.require_subcommand(1);

  fs::path in, out, report, mu_path, lm_path, image, summary, endpoints, control, disk_path;
  std::vector<fs::path> subjects;
  std::vector<std::string> starts, ends;
  std::string bc = "circle";
  ParameterizeOptions popt;
  RegistrationParams rp;
  SynthConfig sc;
  PipelineParams pp;
  std::string prefix = "synth";
  int rings = 40, curves = 3, samples = 16, size = 256, k = 8, grid = 64;
  double eps = 0.05;

  auto* par = app.add_subcommand("parameterize", "disk conformal parameterization of a mesh");
  par->add_option("--in", in, "input mesh (.off or .obj)")->required();
  par->add_option("--out", out, "output .obj with disk coordinates as vt")->required();
  par->add_option("--report", report, "JSON with mean/max |mu| per iteration");
  par->add_option("--max-iter", popt.max_iter)->capture_default_str();
  par->add_option("--tol", popt.tol)->capture_default_str();

  auto* lbs_cmd = app.add_subcommand("lbs", "solve for the map with a given Beltrami coefficient");
  lbs_cmd->add_option("--mesh", in, "disk mesh (.obj with vt, or planar .off)")->required();
  lbs_cmd->add_option("--mu", mu_path, "per-face mu CSV")->required();
  lbs_cmd->add_option("--bc", bc, "boundary condition")->check(CLI::IsMember({"circle", "fixed"}))->capture_default_str();
  lbs_cmd->add_option("--out", out)->required();

  auto* reg = app.add_subcommand("register", "landmark-constrained registration of a disk");
  reg->add_option("--disk", in, "moving disk mesh")->required();
  reg->add_option("--landmarks", lm_path, "landmark file with source and target points")->required();
  reg->add_option("--out", out)->required();
  reg->add_option("--mu", mu_path, "write the registration's mu as CSV");
  reg->add_option("--report", report, "metrics JSON");
  add_registration_flags(reg, rp);

  auto* syn = app.add_subcommand("synth", "random smooth distortion of a disk with landmark pairs");
  syn->add_option("--seed", sc.seed)->capture_default_str();
  syn->add_option("--amplitude", sc.amplitude)->capture_default_str();
  syn->add_option("--cutoff", sc.cutoff)->capture_default_str();
  syn->add_option("--grid", sc.grid_n)->capture_default_str();
  syn->add_option("--rings", rings, "disk mesh resolution")->capture_default_str();
  syn->add_option("--curves", curves)->capture_default_str();
  syn->add_option("--samples", samples, "points per curve")->capture_default_str();
  syn->add_flag("--rotation", sc.rotation, "also rotate the disk by a seeded angle");
  syn->add_option("--out-prefix", prefix)->capture_default_str();

  auto* pipe = app.add_subcommand("pipeline", "register subject surfaces to a control surface");
  pipe->add_option("--control", control)->required();
  pipe->add_option("--subjects", subjects)->required();
  pipe->add_option("--endpoints", endpoints, "lines of: id surface sx sy sz ex ey ez")->required();
  pipe->add_option("--workdir", pp.workdir, "per-subject stage outputs");
  pipe->add_flag("--resume", pp.resume, "reuse stage outputs found in the workdir");
  pipe->add_option("--threads", pp.threads)->capture_default_str();
  pipe->add_option("--samples", pp.samples, "points per landmark curve")->capture_default_str();
  pipe->add_option("--report", report)->required();
  pipe->add_option("--summary", summary, "summary table CSV");
  add_registration_flags(pipe, pp.registration);

  auto* curv = app.add_subcommand("curvature", "vertex mean curvature");
  curv->add_option("--in", in, "mesh, optionally with disk coordinates")->required();
  curv->add_option("--out", out, "one value per vertex")->required();
  curv->add_option("--image", image, "PGM of the curvature on the disk (needs disk coordinates)");
  curv->add_option("--size", size)->capture_default_str();

  auto* det = app.add_subcommand("detect", "landmark curves along curvature valleys");
  det->add_option("--disk", in, "disk .obj with 3D positions and vt")->required();
  det->add_option("--start", starts, "curve start as x,y (repeat per curve)")->required();
  det->add_option("--end", ends, "curve end as x,y (repeat per curve)")->required();
  det->add_option("--samples", samples)->capture_default_str();
  det->add_option("--epsilon", eps, "darkness floor")->capture_default_str();
  det->add_option("--out", out)->required();

  auto* cmp = app.add_subcommand("compress", "low-pass a mu field through the square grid");
  cmp->add_option("--disk", disk_path)->required();
  cmp->add_option("--mu", mu_path)->required();
  cmp->add_option("-k,--keep", k, "frequencies kept per axis side")->capture_default_str();
  cmp->add_option("--grid", grid)->capture_default_str();
  cmp->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*par) return parameterize(in, out, report, popt);
    if (*lbs_cmd) return lbs(in, mu_path, bc, out);
    if (*reg) return register_cmd(in, lm_path, rp, out, mu_path, report);
    if (*syn) return synth(sc, rings, curves, samples, prefix);
    if (*pipe) return pipeline(control, subjects, endpoints, report, summary, pp);
    if (*curv) return curvature(in, out, image, size);
    if (*det) return detect(in, starts, ends, samples, eps, out);
    if (*cmp) return compress_cmd(disk_path, mu_path, k, grid, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "qcreg: %s\n", e.what());
    return 1;
  }
  return 0;
}
