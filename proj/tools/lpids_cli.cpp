#include "lpids_commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

using lpids::cli::RunConfig;

void add_common(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("-m,--depth", cfg.depth, "truncation depth m")->capture_default_str();
  cmd->add_option("--epsilon", cfg.epsilon, "coupling epsilon (default eps_valid(m))");
  cmd->add_option("-N,--size", cfg.size, "number of sites (default 2^(m+5))");
  cmd->add_option("--boundary", cfg.boundary, "dirichlet or periodic")
      ->check(CLI::IsMember({"dirichlet", "periodic"}))
      ->capture_default_str();
  cmd->add_option("--offset", cfg.offset, "translate of the sequence")->capture_default_str();
  cmd->add_option("--levels", cfg.levels, "level range a:b, or L for 1:L");
  cmd->add_option("--cache", cfg.cache_dir, "spectrum cache directory (default $LPIDS_CACHE_DIR)");
  cmd->add_option("--threads", cfg.threads, "engine threads")->capture_default_str();
  cmd->add_flag("--override-epsilon", cfg.override_epsilon,
                "accept epsilon above eps_valid(m) with a warning");
  cmd->add_flag("--free", cfg.free, "drop the potential (V = 0)");
  cmd->add_flag("--diagonal-only", cfg.diagonal_only, "drop the hopping");
  cmd->add_option("--margin", cfg.margin, "bulk margin in sites")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Limit-periodic Schroedinger operators: dyadic potential, spectra, IDS moduli"};
  app.set_version_flag("--version", std::string(lpids::tool_version));
  app.require_subcommand(1);
  RunConfig cfg;
  app.add_option("--out", cfg.out_dir, "write output files into this directory");

  auto* seq = app.add_subcommand("sequence", "lambda^(m)_n with bit patterns");
  seq->add_option("-m,--depth", cfg.depth, "depth m")->required();
  seq->add_option("--from", cfg.from, "first n")->capture_default_str();
  seq->add_option("--to", cfg.to, "last n (default from + 2^m - 1)");

  auto* distal = app.add_subcommand("distal", "certified distality margins for 1 <= k <= kmax");
  distal->add_option("--kmax", cfg.kmax, "largest |k|")->capture_default_str();
  distal->add_option("--distal-depth,--depth", cfg.distal_depth, "certificate depth <= 26")
      ->capture_default_str();
  distal->add_flag("--symmetric", cfg.symmetric, "also print k < 0");

  auto* landing = app.add_subcommand("landing", "landing index of I_{m,j}");
  landing->add_option("-m,--depth", cfg.depth)->required();
  landing->add_option("-j", cfg.j, "interval index (default: all)");

  auto* lattice = app.add_subcommand("lattice", "geometric lattice sums");
  lattice->add_option("-d", cfg.d, "decay base d > 1")->capture_default_str();
  lattice->add_option("--delta", cfg.delta, "lattice spacing")->capture_default_str();
  lattice->add_option("-x", cfg.x, "evaluation point")->capture_default_str();
  lattice->add_option("--radius", cfg.radius, "brute-force truncation J")->capture_default_str();
  lattice->add_option("--average-m", cfg.average_m, "Cesaro average with Delta = 2^m");
  lattice->add_option("--average-n", cfg.average_n, "number of sites for the average");

  auto* spectrum = app.add_subcommand("spectrum", "eigenvalues in cache format");
  add_common(spectrum, cfg);
  spectrum->add_flag("--vectors", cfg.vectors, "also compute eigenvectors");

  auto* ids = app.add_subcommand("ids", "empirical IDS table");
  add_common(ids, cfg);

  auto* loc = app.add_subcommand("localization", "center, decay envelope and defect per site");
  add_common(loc, cfg);
  loc->add_option("-k", cfg.sites, "lattice sites")->required();

  auto* modulus = app.add_subcommand("modulus", "dyadic modulus of continuity vs the Lipschitz bound");
  add_common(modulus, cfg);

  auto* report = app.add_subcommand("report", "combined checks for one (m, epsilon, N)");
  add_common(report, cfg);
  report->add_option("--kmax", cfg.kmax, "largest |k| in the distality section")->capture_default_str();
  report->add_option("--distal-depth", cfg.distal_depth, "certificate depth <= 26")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lpids::cli::usage;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  return lpids::cli::dispatch(cfg, std::cout, std::cerr);
}
