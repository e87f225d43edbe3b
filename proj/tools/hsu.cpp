// hsu: hyperspectral unmixing command-line tool.
//
//   hsu generate --pattern patches --w 50 --h 50 --r 5 --model bilinear --snr 20 --seed 1 --output-dir scene
//   hsu unmix --cube scene/cube.hsc --endmembers scene/endmembers.csv --method skhype --output-dir est
//   hsu eval --truth scene/abundances_true.csv --est est/abundances.csv
//   hsu bench --seeds 5 --output-dir bench
//   hsu replay --manifest est/manifest.json --output-dir est_replay

#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hsu/app.hpp"

namespace {

using namespace hsu;
using namespace hsu::app;

struct CommonFlags {
  std::string output_dir = "out";
  bool dry_run = false;
  int threads = 0;
};

struct UnmixFlags {
  std::string method = "skhype";
  std::string kernel = "poly";
  double mu = 0.003;
  std::optional<double> eta;
  double zeta0 = 1.0;
  int max_iter = 10;
  double tol = 1e-5;
  bool adapt_zeta = true;
  bool skip_bad_pixels = false;
  bool qp_trace = false;
  int qp_max_iter = QpOptions{}.max_iter;
  int bands = 0;
};

void add_unmix_flags(CLI::App* cmd, UnmixFlags& f, bool with_method) {
  if (with_method) {
    cmd->add_option("--method", f.method, "fcls|ncls|khype|nkhype|sfcls|sncls|skhype|snkhype")
        ->capture_default_str();
  }
  cmd->add_option("--kernel", f.kernel, "poly|gaussian[:sigma]")->capture_default_str();
  cmd->add_option("--mu", f.mu, "kernel trade-off mu > 0")->capture_default_str();
  cmd->add_option("--eta", f.eta, "spatial regularization weight (default: 0.3 kernel, 0.03 linear)");
  cmd->add_option("--zeta0", f.zeta0, "initial split-Bregman penalty")->capture_default_str();
  cmd->add_option("--max-iter", f.max_iter, "outer iteration cap")->capture_default_str();
  cmd->add_option("--tol", f.tol, "stop when both split residuals fall below this")->capture_default_str();
  cmd->add_flag("--adapt-zeta,!--no-adapt-zeta", f.adapt_zeta, "residual-balancing penalty updates")
      ->capture_default_str();
  cmd->add_flag("--skip-bad-pixels", f.skip_bad_pixels, "substitute 1/R for pixels whose solve fails");
  cmd->add_flag("--qp-trace", f.qp_trace, "dump per-iteration QP objectives to stderr");
  cmd->add_option("--qp-max-iter", f.qp_max_iter, "per-pixel QP iteration cap")->capture_default_str();
}

UnmixConfig to_config(const UnmixFlags& f, int threads) {
  UnmixConfig c;
  c.method = parse_method(f.method);
  c.kernel = parse_kernel_spec(f.kernel);
  c.mu = f.mu;
  c.bregman.eta = f.eta.value_or(is_kernel(c.method.base) ? kDefaultEtaKernel : kDefaultEtaLinear);
  c.bregman.zeta0 = f.zeta0;
  c.bregman.max_outer = f.max_iter;
  c.bregman.tol = f.tol;
  c.bregman.adapt_zeta = f.adapt_zeta;
  c.bregman.skip_bad_pixels = f.skip_bad_pixels;
  c.bregman.threads = resolve_threads(threads);
  c.bands = f.bands;
  c.qp_trace = f.qp_trace;
  c.qp_max_iter = f.qp_max_iter;
  return c;
}

struct GenerateFlags {
  std::string pattern = "patches";
  std::string model = "bilinear";
  std::string snr = "20";
  std::string library;
  GenerateConfig cfg;
};

void add_generate_flags(CLI::App* cmd, GenerateFlags& f, bool with_model_and_seed) {
  cmd->add_option("--pattern", f.pattern, "patches|smooth")->capture_default_str();
  cmd->add_option("--w", f.cfg.width, "image width")->capture_default_str();
  cmd->add_option("--h", f.cfg.height, "image height")->capture_default_str();
  cmd->add_option("--r", f.cfg.endmembers, "endmember count")->capture_default_str();
  cmd->add_option("--snr", f.snr, "noise SNR in dB, or inf")->capture_default_str();
  cmd->add_option("--endmembers", f.library, "library CSV (bands x spectra); default: built-in library");
  cmd->add_option("--bands", f.cfg.bands, "subsample to this many bands (0 = all)")->capture_default_str();
  cmd->add_option("--patch-size", f.cfg.patch_size, "patch edge length")->capture_default_str();
  cmd->add_option("--pure-fraction", f.cfg.pure_fraction, "fraction of pure patches")->capture_default_str();
  cmd->add_option("--corr-length", f.cfg.correlation_length, "smooth-field correlation length (pixels)")
      ->capture_default_str();
  cmd->add_option("--pnmm-exponent", f.cfg.pnmm_exponent, "post-nonlinear exponent")->capture_default_str();
  if (with_model_and_seed) {
    cmd->add_option("--model", f.model, "linear|bilinear|pnmm")->capture_default_str();
    cmd->add_option("--seed", f.cfg.seed, "master seed")->capture_default_str();
  }
}

GenerateConfig to_config(GenerateFlags f) {
  f.cfg.pattern = parse_field_pattern(f.pattern);
  f.cfg.model = parse_mixture_model(f.model);
  f.cfg.snr_db = parse_snr(f.snr);
  f.cfg.library = f.library;
  return f.cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Kernel-based nonlinear hyperspectral unmixing with l1 spatial regularization"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hsu::kVersion));

  CommonFlags common;

  auto* gen = app.add_subcommand("generate", "synthesize a scene: cube, true abundances, endmembers");
  GenerateFlags gen_flags;
  add_generate_flags(gen, gen_flags, true);
  gen->add_option("--output-dir", common.output_dir)->capture_default_str();
  gen->add_flag("--dry-run", common.dry_run, "validate the configuration only");

  auto* unmix = app.add_subcommand("unmix", "estimate abundances of a cube");
  UnmixFlags unmix_flags;
  UnmixPaths unmix_paths;
  std::string cube_path, em_path;
  unmix->add_option("--cube", cube_path, "HSC cube")->required();
  unmix->add_option("--endmembers", em_path, "endmember CSV (bands x endmembers)")->required();
  add_unmix_flags(unmix, unmix_flags, true);
  unmix->add_option("--bands", unmix_flags.bands, "subsample cube and endmembers to this many bands (0 = all)")
      ->capture_default_str();
  unmix->add_option("--threads", common.threads, "worker threads (default: UNMIX_THREADS or 1)");
  unmix->add_flag("--pgm", unmix_paths.pgm, "also write one PGM abundance map per endmember");
  unmix->add_option("--output-dir", common.output_dir)->capture_default_str();
  unmix->add_flag("--dry-run", common.dry_run, "validate the configuration only");

  auto* eval = app.add_subcommand("eval", "compare estimated abundances with the truth");
  std::string truth, est, ev_cube, ev_em, ev_beta, ev_manifest, ev_kernel = "poly";
  eval->add_option("--truth", truth, "true abundance CSV")->required();
  eval->add_option("--est", est, "estimated abundance CSV")->required();
  eval->add_option("--cube", ev_cube, "cube for reconstruction error");
  eval->add_option("--endmembers", ev_em, "endmembers for reconstruction error");
  eval->add_option("--beta", ev_beta, "kernel dual coefficients (beta.csv)");
  eval->add_option("--kernel", ev_kernel, "kernel used to produce beta")->capture_default_str();
  eval->add_option("--manifest", ev_manifest, "unmix manifest, for ms/pixel");

  auto* bench = app.add_subcommand("bench", "method x mixture-model RMSE table over seeds");
  BenchConfig bench_cfg;
  GenerateFlags bench_scene;
  UnmixFlags bench_unmix;
  std::string bench_methods;
  bench->add_option("--seeds", bench_cfg.seeds, "scenes per mixture model")->capture_default_str();
  bench->add_option("--base-seed", bench_cfg.base_seed, "first scene seed")->capture_default_str();
  bench->add_option("--methods", bench_methods, "comma-separated subset of methods (default: all 8)");
  bench->add_option("--eta-linear", bench_cfg.eta_linear, "eta for sfcls/sncls; <= 0 reuses --eta")
      ->capture_default_str();
  add_generate_flags(bench, bench_scene, false);
  add_unmix_flags(bench, bench_unmix, false);
  bench->add_option("--threads", common.threads, "worker threads (default: UNMIX_THREADS or 1)");
  bench->add_option("--output-dir", common.output_dir)->capture_default_str();
  bench->add_flag("--dry-run", common.dry_run, "validate the configuration only");

  auto* replay = app.add_subcommand("replay", "re-run a manifest and compare output hashes");
  std::string manifest_path;
  replay->add_option("--manifest", manifest_path, "manifest.json to replay")->required();
  replay->add_option("--output-dir", common.output_dir)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadArguments;
  }

  try {
    if (gen->parsed()) {
      std::cout << cmd_generate(to_config(gen_flags), common.output_dir, common.dry_run).dump(2) << '\n';
    } else if (unmix->parsed()) {
      unmix_paths.cube = cube_path;
      unmix_paths.endmembers = em_path;
      unmix_paths.output_dir = common.output_dir;
      std::cout << cmd_unmix(to_config(unmix_flags, common.threads), unmix_paths, common.dry_run).dump(2) << '\n';
    } else if (eval->parsed()) {
      EvalPaths p;
      p.truth = truth;
      p.estimate = est;
      if (!ev_cube.empty()) p.cube = ev_cube;
      if (!ev_em.empty()) p.endmembers = ev_em;
      if (!ev_beta.empty()) p.beta = ev_beta;
      if (!ev_manifest.empty()) p.manifest = ev_manifest;
      p.kernel = parse_kernel_spec(ev_kernel);
      std::cout << to_json(cmd_eval(p)).dump(2) << '\n';
    } else if (bench->parsed()) {
      if (!bench_methods.empty()) {
        bench_cfg.methods.clear();
        std::string item;
        std::istringstream ss(bench_methods);
        while (std::getline(ss, item, ',')) bench_cfg.methods.push_back(item);
      }
      bench_scene.model = "bilinear";
      bench_cfg.scene = to_config(bench_scene);
      bench_cfg.unmix = to_config(bench_unmix, common.threads);
      std::cout << cmd_bench(bench_cfg, common.output_dir, common.dry_run, &std::cerr).dump(2) << '\n';
    } else if (replay->parsed()) {
      const ReplayReport rep = cmd_replay(manifest_path, common.output_dir);
      nlohmann::json j = {{"command", rep.command}, {"identical", rep.identical()}, {"outputs", rep.matches}};
      std::cout << j.dump(2) << '\n';
      if (!rep.identical()) return 1;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArguments;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputIo;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolverFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
