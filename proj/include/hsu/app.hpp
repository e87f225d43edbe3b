#pragma once

// Command implementations behind the `hsu` CLI: generate, unmix, eval,
// bench and replay. Every command that writes an output directory also
// writes exactly one manifest.json describing how to reproduce it.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hsu/hsu.hpp"

namespace hsu::app {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kBadArguments = 2, kInputIo = 3, kSolverFailure = 4 };

// ---------------------------------------------------------------------------
// Method names

struct UnmixMethod {
  PixelMethod base = PixelMethod::khype;
  bool spatial = false;

  std::string name() const { return (spatial ? "s" : "") + to_string(base); }
  bool operator==(const UnmixMethod&) const = default;
};

inline UnmixMethod parse_method(const std::string& s) {
  static const std::map<std::string, UnmixMethod> table = {
      {"fcls", {PixelMethod::fcls, false}},   {"ncls", {PixelMethod::ncls, false}},
      {"khype", {PixelMethod::khype, false}}, {"nkhype", {PixelMethod::nkhype, false}},
      {"sfcls", {PixelMethod::fcls, true}},   {"sncls", {PixelMethod::ncls, true}},
      {"skhype", {PixelMethod::khype, true}}, {"snkhype", {PixelMethod::nkhype, true}},
  };
  auto it = table.find(s);
  if (it == table.end()) throw InvalidArgument("unknown method '" + s + "'");
  return it->second;
}

inline const std::vector<std::string>& all_method_names() {
  static const std::vector<std::string> names = {"fcls",   "ncls",   "sfcls",  "sncls",
                                                  "khype", "nkhype", "skhype", "snkhype"};
  return names;
}

// ---------------------------------------------------------------------------
// Small utilities

inline double parse_snr(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "Inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("--snr expects a number of dB or 'inf', got '" + s + "'");
  }
}

inline std::string snr_to_string(double snr) { return std::isinf(snr) ? "inf" : detail::format_double(snr); }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent sub-streams of one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 1));
}

inline std::string fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

inline void write_json(const json& j, const fs::path& path) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline json read_json(const fs::path& path) {
  auto in = detail::open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed JSON: " + e.what());
  }
}

class Stopwatch {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  std::string command;
  json config;
  json seeds = json::object();
  json inputs = json::object();
  std::map<std::string, fs::path> outputs;
  // Outputs that embed wall-clock timings; hashed but not expected to replay identically.
  std::vector<std::string> volatile_outputs;
  json timings = json::object();
  bool converged = true;
  int threads = 1;

  json to_json() const {
    json outs = json::object();
    for (const auto& [name, path] : outputs) {
      const bool is_volatile =
          std::find(volatile_outputs.begin(), volatile_outputs.end(), name) != volatile_outputs.end();
      outs[name] = {{"path", path.filename().string()}, {"fnv1a64", fnv1a64_file(path)}, {"volatile", is_volatile}};
    }
    return {{"tool", "hsu"},     {"version", kVersion}, {"command", command},   {"config", config},
            {"seeds", seeds},   {"inputs", inputs},    {"outputs", outs},      {"timings", timings},
            {"converged", converged}, {"threads", threads}};
  }

  void write(const fs::path& dir) const { write_json(to_json(), dir / "manifest.json"); }
};

// ---------------------------------------------------------------------------
// generate

struct GenerateConfig {
  FieldPattern pattern = FieldPattern::patches;
  int width = 50;
  int height = 50;
  int endmembers = 5;
  MixtureModel model = MixtureModel::bilinear;
  double snr_db = 20.0;
  std::uint64_t seed = 1;
  std::string library;  // empty = built-in synthetic library
  int bands = 50;       // 0 = keep every library band
  int patch_size = 5;
  double pure_fraction = 0.1;
  double correlation_length = 4.0;
  double pnmm_exponent = 0.7;

  void validate() const {
    if (width < 1 || height < 1) throw InvalidArgument("--w and --h must be >= 1");
    if (endmembers < 2) throw InvalidArgument("--r must be >= 2");
    if (bands < 0) throw InvalidArgument("--bands must be >= 0");
    if (pattern == FieldPattern::patches && (patch_size < 1 || patch_size > std::min(width, height))) {
      throw InvalidArgument("--patch-size must be in [1, min(w, h)]");
    }
    if (pure_fraction < 0.0 || pure_fraction > 1.0) throw InvalidArgument("--pure-fraction must be in [0, 1]");
    if (!(correlation_length >= 0.0)) throw InvalidArgument("--corr-length must be >= 0");
    if (!(pnmm_exponent > 0.0)) throw InvalidArgument("--pnmm-exponent must be > 0");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
      throw InvalidArgument("--snr must be finite or inf");
    }
  }
};

inline json to_json(const GenerateConfig& c) {
  return {{"pattern", to_string(c.pattern)},
          {"w", c.width},
          {"h", c.height},
          {"r", c.endmembers},
          {"model", to_string(c.model)},
          {"snr", snr_to_string(c.snr_db)},
          {"seed", c.seed},
          {"endmembers", c.library},
          {"bands", c.bands},
          {"patch_size", c.patch_size},
          {"pure_fraction", c.pure_fraction},
          {"corr_length", c.correlation_length},
          {"pnmm_exponent", c.pnmm_exponent}};
}

inline GenerateConfig generate_config_from_json(const json& j) {
  GenerateConfig c;
  c.pattern = parse_field_pattern(j.at("pattern").get<std::string>());
  c.width = j.at("w").get<int>();
  c.height = j.at("h").get<int>();
  c.endmembers = j.at("r").get<int>();
  c.model = parse_mixture_model(j.at("model").get<std::string>());
  c.snr_db = parse_snr(j.at("snr").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.library = j.at("endmembers").get<std::string>();
  c.bands = j.at("bands").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.pure_fraction = j.at("pure_fraction").get<double>();
  c.correlation_length = j.at("corr_length").get<double>();
  c.pnmm_exponent = j.at("pnmm_exponent").get<double>();
  return c;
}

struct GeneratedScene {
  SceneCube clean;
  SceneCube cube;
  EndmemberMatrix endmembers;
  AbundanceMatrix truth;
  std::uint64_t abundance_seed = 0, endmember_seed = 0, noise_seed = 0;
};

inline GeneratedScene generate_scene(const GenerateConfig& cfg) {
  cfg.validate();
  Matrix library = cfg.library.empty() ? synthetic_library() : read_csv_matrix(cfg.library);
  if (cfg.bands > 0) library = select_rows(library, band_stride(static_cast<int>(library.rows()), cfg.bands));

  GeneratedScene g;
  g.abundance_seed = derive_seed(cfg.seed, 0);
  g.endmember_seed = derive_seed(cfg.seed, 1);
  g.noise_seed = derive_seed(cfg.seed, 2);

  g.endmembers = pick_endmembers(library, cfg.endmembers, g.endmember_seed);
  AbundanceFieldSpec field;
  field.pattern = cfg.pattern;
  field.width = cfg.width;
  field.height = cfg.height;
  field.endmembers = cfg.endmembers;
  field.patch_size = cfg.patch_size;
  field.pure_fraction = cfg.pure_fraction;
  field.correlation_length = cfg.correlation_length;
  field.seed = g.abundance_seed;
  g.truth = gen_abundances(field);

  MixtureSpec mixture;
  mixture.model = cfg.model;
  mixture.pnmm_exponent = cfg.pnmm_exponent;
  mixture.snr_db = cfg.snr_db;
  mixture.seed = g.noise_seed;
  g.clean = mix(g.truth, g.endmembers, mixture, cfg.width, cfg.height);
  g.cube = add_noise(g.clean, cfg.snr_db, g.noise_seed);
  return g;
}

inline json cmd_generate(const GenerateConfig& cfg, const fs::path& out_dir, bool dry_run = false) {
  cfg.validate();
  if (!cfg.library.empty() && !fs::exists(cfg.library)) throw IoError("library '" + cfg.library + "' not found");
  if (dry_run) return {{"command", "generate"}, {"config", to_json(cfg)}, {"dry_run", true}};

  Stopwatch clock;
  GeneratedScene g = generate_scene(cfg);
  ensure_dir(out_dir);
  Manifest man;
  man.command = "generate";
  man.config = to_json(cfg);
  man.seeds = {{"master", cfg.seed},
               {"abundances", g.abundance_seed},
               {"endmembers", g.endmember_seed},
               {"noise", g.noise_seed}};
  if (!cfg.library.empty()) man.inputs["library"] = fs::absolute(cfg.library).string();
  save_cube(g.cube, out_dir / "cube.hsc");
  save_abundances(g.truth, out_dir / "abundances_true.csv", cfg.width, cfg.height, true);
  save_endmembers(g.endmembers, out_dir / "endmembers.csv");
  man.outputs = {{"cube", out_dir / "cube.hsc"},
                 {"abundances_true", out_dir / "abundances_true.csv"},
                 {"endmembers", out_dir / "endmembers.csv"}};
  const double snr = realized_snr_db(g.cube, g.clean);
  man.timings = {{"wall_ms", clock.elapsed_ms()}};
  json summary = {{"command", "generate"},
                  {"output_dir", out_dir.string()},
                  {"pixels", g.cube.pixels()},
                  {"bands", g.cube.bands()},
                  {"endmembers", g.endmembers.count()},
                  {"realized_snr_db", std::isinf(snr) ? json("inf") : json(snr)}};
  man.config["realized_snr_db"] = summary["realized_snr_db"];
  man.write(out_dir);
  return summary;
}

// ---------------------------------------------------------------------------
// unmix

struct UnmixConfig {
  UnmixMethod method{PixelMethod::khype, true};
  double mu = 0.003;
  KernelSpec kernel = KernelSpec::polynomial();
  BregmanConfig bregman;
  int bands = 0;  // 0 = use every band
  int qp_max_iter = QpOptions{}.max_iter;
  bool qp_trace = false;

  void validate() const {
    if (is_kernel(method.base) && !(mu > 0.0)) throw InvalidArgument("--mu must be > 0");
    if (bands < 0) throw InvalidArgument("--bands must be >= 0");
    if (qp_max_iter < 0) throw InvalidArgument("--qp-max-iter must be >= 0");
    bregman.validate();
  }
};

inline json to_json(const UnmixConfig& c) {
  return {{"method", c.method.name()},
          {"mu", c.mu},
          {"kernel", to_string(c.kernel)},
          {"eta", c.bregman.eta},
          {"zeta0", c.bregman.zeta0},
          {"max_iter", c.bregman.max_outer},
          {"tol", c.bregman.tol},
          {"adapt_zeta", c.bregman.adapt_zeta},
          {"skip_bad_pixels", c.bregman.skip_bad_pixels},
          {"bands", c.bands},
          {"qp_max_iter", c.qp_max_iter}};
}

inline UnmixConfig unmix_config_from_json(const json& j) {
  UnmixConfig c;
  c.method = parse_method(j.at("method").get<std::string>());
  c.mu = j.at("mu").get<double>();
  c.kernel = parse_kernel_spec(j.at("kernel").get<std::string>());
  c.bregman.eta = j.at("eta").get<double>();
  c.bregman.zeta0 = j.at("zeta0").get<double>();
  c.bregman.max_outer = j.at("max_iter").get<int>();
  c.bregman.tol = j.at("tol").get<double>();
  c.bregman.adapt_zeta = j.at("adapt_zeta").get<bool>();
  c.bregman.skip_bad_pixels = j.at("skip_bad_pixels").get<bool>();
  c.bands = j.at("bands").get<int>();
  c.qp_max_iter = j.value("qp_max_iter", c.qp_max_iter);
  return c;
}

struct UnmixOutcome {
  AbundanceMatrix abundances;
  Matrix beta;
  Matrix gram;
  std::vector<IterationRecord> history;
  bool converged = true;
  double constraint_violation = 0.0;
  std::vector<int> bad_pixels;
  double wall_ms = 0.0;
  double ms_per_pixel = 0.0;
};

inline PixelSolver make_pixel_solver(const EndmemberMatrix& endmembers, const UnmixConfig& cfg) {
  PixelModel model{cfg.method.base, cfg.mu};
  Matrix k;
  if (model.kernel()) {
    k = gram(cfg.kernel, endmembers);
    assert_psd(k);
  }
  QpOptions opts;
  opts.record_trace = cfg.qp_trace;
  opts.max_iter = cfg.qp_max_iter;
  return PixelSolver(endmembers.matrix(), std::move(k), model, opts);
}

inline UnmixOutcome unmix_scene(const SceneCube& cube, const EndmemberMatrix& endmembers, const UnmixConfig& cfg) {
  cfg.validate();
  if (cube.bands() != endmembers.bands()) {
    throw InvalidArgument("cube has " + std::to_string(cube.bands()) + " bands but endmembers have " +
                          std::to_string(endmembers.bands()));
  }
  Stopwatch clock;
  const PixelSolver solver = make_pixel_solver(endmembers, cfg);
  UnmixOutcome out;
  out.gram = solver.gram();
  if (cfg.method.spatial) {
    BregmanResult res = run_bregman(cube, solver, cfg.bregman);
    out.abundances = std::move(res.abundances);
    out.beta = std::move(res.beta);
    out.history = std::move(res.history);
    out.converged = res.converged;
    out.bad_pixels = std::move(res.bad_pixels);
  } else {
    PixelBatch batch = solve_all_pixels(cube, solver, 0.0, nullptr, nullptr, cfg.bregman.threads,
                                        cfg.bregman.skip_bad_pixels);
    out.abundances = AbundanceMatrix{std::move(batch.alpha)};
    out.beta = std::move(batch.beta);
    out.bad_pixels = std::move(batch.bad_pixels);
  }
  out.constraint_violation = out.abundances.constraint_violation(solver.model().sum_to_one());
  out.wall_ms = clock.elapsed_ms();
  out.ms_per_pixel = out.wall_ms / cube.pixels();
  return out;
}

inline void write_history_csv(const std::vector<IterationRecord>& history, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "iter,rho_A,rho_U,r_p,r_d,zeta,objective\n";
  for (const auto& h : history) {
    out << h.iter << ',' << detail::format_double(h.rho_A) << ',' << detail::format_double(h.rho_U) << ','
        << detail::format_double(h.r_p) << ',' << detail::format_double(h.r_d) << ','
        << detail::format_double(h.zeta) << ',' << detail::format_double(h.objective) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

struct UnmixPaths {
  fs::path cube;
  fs::path endmembers;
  fs::path output_dir;
  bool pgm = false;
};

inline json cmd_unmix(const UnmixConfig& cfg, const UnmixPaths& paths, bool dry_run = false) {
  cfg.validate();
  SceneCube cube = load_cube(paths.cube);
  EndmemberMatrix endmembers = load_endmembers(paths.endmembers);
  if (cfg.bands > 0) {
    const auto rows = band_stride(cube.bands(), cfg.bands);
    cube = SceneCube(cube.width(), cube.height(), select_rows(cube.data(), rows));
    endmembers = EndmemberMatrix(select_rows(endmembers.matrix(), band_stride(endmembers.bands(), cfg.bands)));
  }
  if (cube.bands() != endmembers.bands()) {
    throw InvalidArgument("cube has " + std::to_string(cube.bands()) + " bands but endmembers have " +
                          std::to_string(endmembers.bands()));
  }
  json summary = {{"command", "unmix"}, {"config", to_json(cfg)}};
  if (dry_run) {
    summary["dry_run"] = true;
    summary["pixels"] = cube.pixels();
    summary["bands"] = cube.bands();
    summary["endmembers"] = endmembers.count();
    return summary;
  }

  UnmixOutcome res = unmix_scene(cube, endmembers, cfg);
  ensure_dir(paths.output_dir);
  const bool sto = uses_sum_to_one(cfg.method.base);
  Manifest man;
  man.command = "unmix";
  man.config = to_json(cfg);
  man.threads = cfg.bregman.threads;
  man.inputs = {{"cube", fs::absolute(paths.cube).string()},
                {"endmembers", fs::absolute(paths.endmembers).string()},
                {"pgm", paths.pgm}};
  save_abundances(res.abundances, paths.output_dir / "abundances.csv", cube.width(), cube.height(), sto);
  man.outputs["abundances"] = paths.output_dir / "abundances.csv";
  if (res.beta.size()) {
    write_csv_matrix(res.beta, paths.output_dir / "beta.csv", "kernel dual coefficients: rows = bands, columns = pixels");
    man.outputs["beta"] = paths.output_dir / "beta.csv";
  }
  if (cfg.method.spatial) {
    write_history_csv(res.history, paths.output_dir / "history.csv");
    man.outputs["history"] = paths.output_dir / "history.csv";
  }
  if (paths.pgm) {
    auto maps = save_abundance_maps(res.abundances, paths.output_dir, "abundance", cube.width(), cube.height());
    for (std::size_t i = 0; i < maps.size(); ++i) man.outputs["map_" + std::to_string(i)] = maps[i];
  }
  man.converged = res.converged;
  man.timings = {{"wall_ms", res.wall_ms}, {"ms_per_pixel", res.ms_per_pixel}};
  man.config["bad_pixels"] = res.bad_pixels;
  man.write(paths.output_dir);

  summary["output_dir"] = paths.output_dir.string();
  summary["converged"] = res.converged;
  summary["iterations"] = res.history.size();
  summary["ms_per_pixel"] = res.ms_per_pixel;
  summary["constraint_violation"] = res.constraint_violation;
  summary["bad_pixels"] = res.bad_pixels;
  return summary;
}

// ---------------------------------------------------------------------------
// eval

struct EvalPaths {
  fs::path truth;
  fs::path estimate;
  std::optional<fs::path> cube;
  std::optional<fs::path> endmembers;
  std::optional<fs::path> beta;
  std::optional<fs::path> manifest;
  KernelSpec kernel = KernelSpec::polynomial();
};

inline json to_json(const EvalReport& r) {
  return {{"rmse", r.rmse},
          {"per_endmember_rmse", std::vector<double>(r.per_endmember_rmse.data(),
                                                     r.per_endmember_rmse.data() + r.per_endmember_rmse.size())},
          {"per_endmember_rmse_note", "extension: RMSE of each abundance row separately"},
          {"reconstruction_rmse", r.reconstruction_rmse},
          {"runtime_ms_per_pixel", r.runtime_ms_per_pixel}};
}

inline EvalReport cmd_eval(const EvalPaths& paths) {
  const AbundanceMatrix truth = load_abundances(paths.truth);
  const AbundanceMatrix est = load_abundances(paths.estimate);
  EvalReport rep;
  rep.rmse = rmse(truth, est);
  rep.per_endmember_rmse = per_endmember_rmse(truth, est);
  if (paths.cube && paths.endmembers) {
    const SceneCube cube = load_cube(*paths.cube);
    const EndmemberMatrix m = load_endmembers(*paths.endmembers);
    Matrix beta, k;
    if (paths.beta) {
      beta = read_csv_matrix(*paths.beta);
      k = gram(paths.kernel, m);
    }
    rep.reconstruction_rmse = reconstruction_rmse(cube, m.matrix(), k, est, beta);
  }
  if (paths.manifest) {
    const json man = read_json(*paths.manifest);
    if (man.contains("timings") && man["timings"].contains("ms_per_pixel")) {
      rep.runtime_ms_per_pixel = man["timings"]["ms_per_pixel"].get<double>();
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// bench

struct BenchConfig {
  std::vector<std::string> methods = all_method_names();
  std::vector<MixtureModel> models = {MixtureModel::bilinear, MixtureModel::pnmm};
  int seeds = 5;
  std::uint64_t base_seed = 1;
  GenerateConfig scene;  // model and seed are overridden per run
  UnmixConfig unmix;     // method is overridden per run
  double eta_linear = kDefaultEtaLinear;  // eta for sfcls/sncls; <= 0 means reuse unmix.bregman.eta

  void validate() const {
    if (seeds < 1) throw InvalidArgument("--seeds must be >= 1");
    if (methods.empty()) throw InvalidArgument("bench: no methods");
    if (models.empty()) throw InvalidArgument("bench: no mixture models");
    for (const auto& m : methods) parse_method(m);
    scene.validate();
    unmix.validate();
  }
};

inline json to_json(const BenchConfig& c) {
  std::vector<std::string> models;
  for (auto m : c.models) models.push_back(to_string(m));
  return {{"methods", c.methods}, {"models", models},           {"seeds", c.seeds},
          {"base_seed", c.base_seed}, {"scene", to_json(c.scene)}, {"unmix", to_json(c.unmix)},
          {"eta_linear", c.eta_linear}};
}

inline BenchConfig bench_config_from_json(const json& j) {
  BenchConfig c;
  c.methods = j.at("methods").get<std::vector<std::string>>();
  c.models.clear();
  for (const auto& m : j.at("models")) c.models.push_back(parse_mixture_model(m.get<std::string>()));
  c.seeds = j.at("seeds").get<int>();
  c.base_seed = j.at("base_seed").get<std::uint64_t>();
  c.scene = generate_config_from_json(j.at("scene"));
  c.unmix = unmix_config_from_json(j.at("unmix"));
  c.eta_linear = j.at("eta_linear").get<double>();
  return c;
}

struct BenchRun {
  std::string method;
  MixtureModel model;
  std::uint64_t seed;
  double rmse;
  double ms_per_pixel;
  int iterations;
  bool converged;
};

struct BenchCell {
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  double ms_per_pixel = 0.0;
};

struct BenchResult {
  std::vector<BenchRun> runs;
  // (method, model) -> aggregate over seeds
  std::map<std::pair<std::string, MixtureModel>, BenchCell> table;

  // Per-seed RMSE in seed order for one (method, model) pair.
  std::vector<double> rmse_by_seed(const std::string& method, MixtureModel model) const {
    std::vector<double> out;
    for (const auto& r : runs)
      if (r.method == method && r.model == model) out.push_back(r.rmse);
    return out;
  }
};

inline UnmixConfig bench_unmix_config(const BenchConfig& cfg, const std::string& method) {
  UnmixConfig u = cfg.unmix;
  u.method = parse_method(method);
  if (!is_kernel(u.method.base) && cfg.eta_linear > 0.0) u.bregman.eta = cfg.eta_linear;
  return u;
}

inline BenchResult run_bench(const BenchConfig& cfg, std::ostream* progress = nullptr) {
  cfg.validate();
  BenchResult result;
  for (MixtureModel model : cfg.models) {
    for (int s = 0; s < cfg.seeds; ++s) {
      GenerateConfig scene = cfg.scene;
      scene.model = model;
      scene.seed = cfg.base_seed + static_cast<std::uint64_t>(s);
      const GeneratedScene g = generate_scene(scene);
      for (const auto& method : cfg.methods) {
        const UnmixConfig u = bench_unmix_config(cfg, method);
        const UnmixOutcome out = unmix_scene(g.cube, g.endmembers, u);
        BenchRun run{method, model, scene.seed, rmse(g.truth, out.abundances), out.ms_per_pixel,
                     static_cast<int>(out.history.size()), out.converged};
        if (progress) {
          *progress << "bench " << to_string(model) << " seed=" << scene.seed << " " << method
                    << " rmse=" << run.rmse << " ms/pixel=" << run.ms_per_pixel << '\n';
        }
        result.runs.push_back(run);
      }
    }
  }
  for (const auto& method : cfg.methods) {
    for (MixtureModel model : cfg.models) {
      std::vector<double> values, times;
      for (const auto& r : result.runs) {
        if (r.method == method && r.model == model) {
          values.push_back(r.rmse);
          times.push_back(r.ms_per_pixel);
        }
      }
      BenchCell cell;
      for (double v : values) cell.rmse_mean += v;
      cell.rmse_mean /= static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - cell.rmse_mean) * (v - cell.rmse_mean);
      cell.rmse_std = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
      for (double t : times) cell.ms_per_pixel += t;
      cell.ms_per_pixel /= static_cast<double>(times.size());
      result.table[{method, model}] = cell;
    }
  }
  return result;
}

// Wide table: one row per method, RMSE mean/std per mixture model, then ms/pixel.
inline void write_bench_table(const BenchResult& res, const BenchConfig& cfg, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "method";
  for (auto m : cfg.models) out << ',' << to_string(m) << "_rmse_mean," << to_string(m) << "_rmse_std";
  out << ",ms_per_pixel\n";
  for (const auto& method : cfg.methods) {
    out << method;
    double ms = 0.0;
    for (auto m : cfg.models) {
      const auto& cell = res.table.at({method, m});
      out << ',' << detail::format_double(cell.rmse_mean) << ',' << detail::format_double(cell.rmse_std);
      ms += cell.ms_per_pixel;
    }
    out << ',' << detail::format_double(ms / static_cast<double>(cfg.models.size())) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_bench_runs(const BenchResult& res, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "method,model,seed,rmse,ms_per_pixel,iterations,converged\n";
  for (const auto& r : res.runs) {
    out << r.method << ',' << to_string(r.model) << ',' << r.seed << ',' << detail::format_double(r.rmse) << ','
        << detail::format_double(r.ms_per_pixel) << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_bench_rmse(const BenchResult& res, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "method,model,seed,rmse\n";
  for (const auto& r : res.runs) {
    out << r.method << ',' << to_string(r.model) << ',' << r.seed << ',' << detail::format_double(r.rmse) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_bench_outputs(const BenchResult& res, const BenchConfig& cfg, const fs::path& out_dir) {
  ensure_dir(out_dir);
  write_bench_table(res, cfg, out_dir / "table.csv");
  write_bench_runs(res, out_dir / "runs.csv");
  write_bench_rmse(res, out_dir / "rmse.csv");
}

inline json cmd_bench(const BenchConfig& cfg, const fs::path& out_dir, bool dry_run = false,
                      std::ostream* progress = nullptr) {
  cfg.validate();
  if (dry_run) return {{"command", "bench"}, {"config", to_json(cfg)}, {"dry_run", true}};
  Stopwatch clock;
  const BenchResult res = run_bench(cfg, progress);
  write_bench_outputs(res, cfg, out_dir);
  Manifest man;
  man.command = "bench";
  man.config = to_json(cfg);
  man.threads = cfg.unmix.bregman.threads;
  man.seeds = {{"base", cfg.base_seed}, {"count", cfg.seeds}};
  man.outputs = {{"table", out_dir / "table.csv"}, {"runs", out_dir / "runs.csv"}, {"rmse", out_dir / "rmse.csv"}};
  man.volatile_outputs = {"table", "runs"};
  man.timings = {{"wall_ms", clock.elapsed_ms()}};
  man.converged = std::all_of(res.runs.begin(), res.runs.end(), [](const BenchRun& r) { return r.converged; });
  man.write(out_dir);
  json rows = json::array();
  for (const auto& method : cfg.methods) {
    json row = {{"method", method}};
    for (auto m : cfg.models) {
      const auto& c = res.table.at({method, m});
      row[to_string(m)] = {{"rmse_mean", c.rmse_mean}, {"rmse_std", c.rmse_std}, {"ms_per_pixel", c.ms_per_pixel}};
    }
    rows.push_back(row);
  }
  return {{"command", "bench"}, {"output_dir", out_dir.string()}, {"table", rows}};
}

// ---------------------------------------------------------------------------
// replay

struct ReplayReport {
  std::string command;
  std::map<std::string, bool> matches;  // output name -> identical hash
  bool identical() const {
    return std::all_of(matches.begin(), matches.end(), [](const auto& kv) { return kv.second; });
  }
};

// Re-executes the command recorded in `manifest_path` into `out_dir`
// (single-threaded) and compares output hashes with the recorded ones.
inline ReplayReport cmd_replay(const fs::path& manifest_path, const fs::path& out_dir) {
  const json man = read_json(manifest_path);
  ReplayReport rep;
  try {
    rep.command = man.at("command").get<std::string>();
    const json& cfg = man.at("config");
    if (rep.command == "generate") {
      cmd_generate(generate_config_from_json(cfg), out_dir);
    } else if (rep.command == "unmix") {
      UnmixConfig u = unmix_config_from_json(cfg);
      u.bregman.threads = 1;
      UnmixPaths p{man.at("inputs").at("cube").get<std::string>(), man.at("inputs").at("endmembers").get<std::string>(),
                   out_dir, man.at("inputs").value("pgm", false)};
      cmd_unmix(u, p);
    } else if (rep.command == "bench") {
      BenchConfig b = bench_config_from_json(cfg);
      b.unmix.bregman.threads = 1;
      write_bench_outputs(run_bench(b), b, out_dir);
    } else {
      throw InvalidArgument("manifest has unknown command '" + rep.command + "'");
    }
    for (const auto& [name, entry] : man.at("outputs").items()) {
      if (entry.value("volatile", false)) continue;
      const fs::path produced = out_dir / entry.at("path").get<std::string>();
      rep.matches[name] = fs::exists(produced) && fnv1a64_file(produced) == entry.at("fnv1a64").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw IoError(manifest_path.string() + ": incomplete manifest: " + e.what());
  }
  return rep;
}

}  // namespace hsu::app
