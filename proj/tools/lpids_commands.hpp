#pragma once

// Subcommand implementations behind the lpids executable. Each command
// writes its tables to <out>/<name> when an output directory is set and to
// the console otherwise, and returns the process exit code.

#include <lpids/lpids.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace lpids::cli {

enum ExitCode : int { ok = 0, usage = 1, verdict_fail = 2, numerical = 3 };

struct RunConfig {
  std::string command;

  int depth = 4;
  std::optional<double> epsilon;
  std::optional<std::size_t> size;
  std::string boundary = "dirichlet";
  std::int64_t offset = 0;
  std::string levels;  // "a:b" or "L"; empty means 1:m
  std::string out_dir;
  std::string cache_dir;
  unsigned threads = 1;
  bool override_epsilon = false;
  bool free = false;
  bool diagonal_only = false;
  std::size_t margin = 8;

  // sequence
  std::int64_t from = 0;
  std::optional<std::int64_t> to;
  // distal
  std::int64_t kmax = 16;
  int distal_depth = 20;
  bool symmetric = false;
  // landing
  std::optional<std::uint64_t> j;
  // lattice
  double d = 2.0;
  double delta = 1.0;
  double x = 0.0;
  std::int64_t radius = 64;
  std::optional<int> average_m;
  std::optional<std::int64_t> average_n;
  // spectrum
  bool vectors = false;
  // localization
  std::vector<std::int64_t> sites;
};

/// Console sink plus optional output directory.
class Output {
 public:
  Output(std::ostream& console, std::string dir) : console_(console), dir_(std::move(dir)) {}

  void emit(const std::string& name, const std::string& content) const {
    if (dir_.empty()) {
      console_ << content;
      return;
    }
    std::filesystem::create_directories(dir_);
    const auto path = std::filesystem::path(dir_) / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw PreconditionError("cannot write " + path.string());
    f << content;
  }

  [[nodiscard]] bool to_files() const { return !dir_.empty(); }
  std::ostream& console() const { return console_; }

 private:
  std::ostream& console_;
  std::string dir_;
};

inline std::string fmt(double x) { return format_double(x); }

// ---------------------------------------------------------------------------
// Shared setup

inline OperatorVariant variant_of(const RunConfig& cfg) {
  require(!(cfg.free && cfg.diagonal_only),
          "--free and --diagonal-only are mutually exclusive");
  if (cfg.free) return OperatorVariant::free;
  if (cfg.diagonal_only) return OperatorVariant::diagonal_only;
  return OperatorVariant::schroedinger;
}

inline PotentialSpec potential_of(const RunConfig& cfg) {
  require(cfg.depth >= 1 && cfg.depth <= 30, "--depth must lie in [1, 30]");
  const double eps = cfg.epsilon.value_or(valid_coupling(cfg.depth));
  require(eps > 0.0 && std::isfinite(eps), "--epsilon must be positive");
  PotentialSpec spec(cfg.depth, eps, cfg.offset, cfg.override_epsilon);
  if (variant_of(cfg) == OperatorVariant::schroedinger && !spec.within_validity() &&
      !cfg.override_epsilon)
    throw PreconditionError("epsilon = " + fmt(eps) + " exceeds eps_valid(" +
                            std::to_string(cfg.depth) + ") = " +
                            fmt(valid_coupling(cfg.depth)) +
                            "; pass --override-epsilon to run anyway");
  return spec;
}

inline std::size_t size_of(const RunConfig& cfg, bool warn_period = true) {
  const std::size_t n = cfg.size.value_or(std::size_t{1} << (cfg.depth + 5));
  require(n >= 2, "--size must be >= 2");
  require(n <= (std::size_t{1} << 22), "--size must be <= 2^22");
  if (warn_period && variant_of(cfg) != OperatorVariant::free &&
      n % (std::size_t{1} << cfg.depth) != 0)
    warn("N = " + std::to_string(n) + " is not a multiple of 2^m = " +
         std::to_string(std::size_t{1} << cfg.depth) +
         "; interval masses carry an extra O(2^m/N) error");
  return n;
}

inline LevelRange levels_of(const RunConfig& cfg) {
  LevelRange r = cfg.levels.empty() ? LevelRange{1, cfg.depth} : parse_levels(cfg.levels);
  require(r.last <= cfg.depth, "--levels must not exceed --depth");
  return r;
}

struct Problem {
  PotentialSpec spec;
  std::size_t size;
  Boundary boundary;
  OperatorVariant variant;
  PeriodicOperator op;
  SpectralData data;
};

/// Builds the operator and its spectrum, consulting the cache when one is
/// configured. Eigenvectors are computed only when `need_vectors` is set.
inline Problem solve_problem(const RunConfig& cfg, bool need_vectors) {
  Problem p{potential_of(cfg), size_of(cfg), parse_boundary(cfg.boundary),
            variant_of(cfg), {}, {}};
  p.op = build_operator(p.spec, p.size, p.boundary, p.variant);
  const SpectrumKey key{p.spec.depth, p.spec.coupling, p.size, p.boundary, p.spec.offset,
                        p.variant};
  const auto dir = cache_directory(cfg.cache_dir);
  if (dir) {
    if (auto cached = load_cached(*dir, key); cached && (!need_vectors || cached->has_vectors())) {
      p.data = std::move(*cached);
      return p;
    }
  }
  const Parallelism par{std::max(1u, cfg.threads)};
  p.data = eigenvalues_sturm(p.op, par);
  if (need_vectors) compute_eigenvectors(p.op, p.data, par);
  if (dir) store_cached(*dir, key, p.data);
  return p;
}

struct EnvelopeSummary {
  std::vector<std::size_t> indices;  // bulk eigenvalue indices
  std::vector<DecayFit> fits;
  std::optional<DecayProfile> envelope;
  std::string note;
};

inline EnvelopeSummary bulk_envelope(const Problem& p, std::size_t margin) {
  EnvelopeSummary s;
  try {
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      const std::size_t c = p.data.centers[k];
      if (c < margin || c + margin >= p.size) continue;
      s.indices.push_back(k);
      s.fits.push_back(decay_fit(p.data.eigenvectors[k], c));
    }
    if (s.fits.empty()) {
      s.note = "no bulk eigenvectors";
    } else {
      s.envelope = worst_case_envelope(s.fits);
    }
  } catch (const LocalizationError& e) {
    s.fits.clear();
    s.note = e.what();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_sequence(const RunConfig& cfg, const Output& out) {
  require(cfg.depth >= 1 && cfg.depth <= max_depth, "--depth must lie in [1, 62]");
  const std::int64_t last =
      cfg.to.value_or(cfg.from + (std::int64_t{1} << std::min(cfg.depth, 20)) - 1);
  require(last >= cfg.from, "range end must be >= range start");
  require(last - cfg.from < (std::int64_t{1} << 22), "range longer than 2^22 rows");
  const DistalSequence seq(cfg.depth);
  std::ostringstream os;
  os << "n,bits,lambda,decimal\n";
  for (std::int64_t n = cfg.from; n <= last; ++n) {
    const Dyadic v = seq.value(n);
    os << n << ',' << residue_pattern(n, cfg.depth).to_string() << ',' << v.to_string()
       << ',' << fmt(v.to_double()) << '\n';
  }
  out.emit("sequence.csv", os.str());
  return ok;
}

inline int cmd_distal(const RunConfig& cfg, const Output& out) {
  require(cfg.kmax >= 1, "--kmax must be >= 1");
  const DistalityCertifier certifier(cfg.distal_depth);
  std::ostringstream os;
  os << "k,depth,min_gap,slack,margin,threshold,status\n";
  bool all_pass = true, slack_warned = false;
  auto row = [&](std::int64_t k) {
    const auto c = certifier.certify(k);
    all_pass = all_pass && c.passes();
    if (!c.meaningful && !slack_warned) {
      warn("depth " + std::to_string(cfg.distal_depth) +
           ": certificate slack 2^{-depth+1} reaches 1/(16|k|) from |k| = " +
           std::to_string(k < 0 ? -k : k) + " on; increase --distal-depth");
      slack_warned = true;
    }
    os << k << ',' << c.depth << ',' << c.min_gap.to_string() << ',' << c.slack.to_string()
       << ',' << fmt(c.margin) << ',' << fmt(c.threshold()) << ','
       << (c.passes() ? "pass" : "fail") << '\n';
  };
  if (cfg.symmetric)
    for (std::int64_t k = -cfg.kmax; k <= -1; ++k) row(k);
  for (std::int64_t k = 1; k <= cfg.kmax; ++k) row(k);
  out.emit("distal.csv", os.str());
  out.console() << "verdict " << (all_pass ? "PASS" : "FAIL") << '\n';
  return all_pass ? ok : verdict_fail;
}

inline int cmd_landing(const RunConfig& cfg, const Output& out) {
  require(cfg.depth >= 1 && cfg.depth <= 20, "landing: --depth must lie in [1, 20]");
  const int m = cfg.depth;
  const std::uint64_t period = std::uint64_t{1} << m;
  const DistalSequence seq(m);
  std::vector<std::uint64_t> js;
  if (cfg.j) {
    require(*cfg.j < period, "-j must lie in [0, 2^m)");
    js.push_back(*cfg.j);
  } else {
    require(m <= 12, "landing: listing every j needs --depth <= 12; pass -j");
    for (std::uint64_t j = 0; j < period; ++j) js.push_back(j);
  }
  std::ostringstream os;
  os << "m,j,pattern,landing,window,mismatches\n";
  bool clean = true;
  for (auto j : js) {
    const auto l = landing_index(m, j);
    const DyadicInterval iv(m, j);
    std::size_t bad = 0;
    const auto window = static_cast<std::int64_t>(3 * period);
    for (std::int64_t n = -static_cast<std::int64_t>(period); n < window - static_cast<std::int64_t>(period); ++n) {
      const bool in = interval_membership(seq, n, iv);
      const bool residue = (static_cast<std::uint64_t>(n) & (period - 1)) == l;
      bad += in != residue;
    }
    clean = clean && bad == 0;
    os << m << ',' << j << ',' << BitPattern::from_index(j, m).to_string() << ',' << l << ",["
       << -static_cast<std::int64_t>(period) << ' ' << 2 * period << ")," << bad << '\n';
  }
  out.emit("landing.csv", os.str());
  return clean ? ok : verdict_fail;
}

inline int cmd_lattice(const RunConfig& cfg, const Output& out) {
  std::ostringstream os;
  os << "quantity,closed,bruteforce,difference,bound\n";
  if (cfg.average_m) {
    const int m = *cfg.average_m;
    require(m >= 1 && m <= 20, "--average-m must lie in [1, 20]");
    const std::int64_t n = cfg.average_n.value_or(std::int64_t{4} << m);
    const double closed = average_limit_closed(cfg.d, m);
    const double brute = average_bruteforce(cfg.d, m, 0, n);
    // Exact when 2^m divides N; otherwise the partial period moves the
    // average by at most one period sum over N.
    const double bound = n % (std::int64_t{1} << m) == 0
                             ? 1e-12 * closed
                             : std::ldexp(closed, m) / static_cast<double>(n);
    os << "average," << fmt(closed) << ',' << fmt(brute) << ',' << fmt(std::abs(closed - brute))
       << ',' << fmt(bound) << '\n';
  } else {
    const double closed = lattice_sum_closed(cfg.d, cfg.delta, cfg.x);
    const double brute = lattice_sum_bruteforce(cfg.d, cfg.delta, cfg.x, cfg.radius);
    const double bound = lattice_truncation_bound(cfg.d, cfg.delta, cfg.x, cfg.radius);
    os << "sum," << fmt(closed) << ',' << fmt(brute) << ',' << fmt(std::abs(closed - brute))
       << ',' << fmt(bound) << '\n';
  }
  out.emit("lattice.csv", os.str());
  return ok;
}

inline int cmd_spectrum(const RunConfig& cfg, const Output& out) {
  const Problem p = solve_problem(cfg, cfg.vectors);
  std::ostringstream os;
  write_spectrum(os, SpectrumKey{p.spec.depth, p.spec.coupling, p.size, p.boundary,
                                 p.spec.offset, p.variant},
                 p.data);
  out.emit("spectrum.txt", os.str());
  return ok;
}

inline int cmd_ids(const RunConfig& cfg, const Output& out) {
  const Problem p = solve_problem(cfg, false);
  const auto ids = ids_from_spectrum(p.data);
  std::ostringstream csv;
  csv << "E,k\n";
  const auto ev = ids.eigenvalues();
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (i + 1 < ev.size() && ev[i + 1] == ev[i]) continue;  // one row per step
    csv << fmt(ev[i]) << ',' << fmt(ids(ev[i])) << '\n';
  }
  if (out.to_files()) {
    std::ostringstream spec_file;
    write_spectrum(spec_file, SpectrumKey{p.spec.depth, p.spec.coupling, p.size, p.boundary,
                                          p.spec.offset, p.variant},
                   p.data);
    out.emit("eigenvalues.txt", spec_file.str());
  }
  out.emit("ids.csv", csv.str());
  return ok;
}

inline int cmd_localization(const RunConfig& cfg, const Output& out) {
  require(!cfg.sites.empty(), "localization: pass at least one -k site");
  require(!cfg.free, "localization: the free operator has no localized eigenvectors");
  const std::size_t n = size_of(cfg, false);
  for (auto k : cfg.sites)
    require(k >= 0 && static_cast<std::size_t>(k) < n,
            "-k " + std::to_string(k) + " lies outside [0, N)");
  const Problem p = solve_problem(cfg, true);
  std::vector<std::size_t> index_of(p.size, p.size);
  for (std::size_t i = 0; i < p.size; ++i)
    if (p.data.centers[i] < p.size) index_of[p.data.centers[i]] = i;
  std::ostringstream os;
  os << "k,index,energy,lambda,defect,bound,c,d,fitted_d\n";
  for (auto k : cfg.sites) {
    const auto site = static_cast<std::size_t>(k);
    const std::size_t i = index_of[site];
    if (i == p.size)
      throw LocalizationError("no eigenvector is centered at site " + std::to_string(k));
    const Dyadic lam = p.spec.lambda(k);
    const double e = p.data.eigenvalues[i];
    const auto fit = decay_fit(p.data.eigenvectors[i], site);
    os << k << ',' << i << ',' << fmt(e) << ',' << lam.to_string() << ','
       << fmt(std::abs(p.spec.coupling * e - lam.to_double())) << ','
       << fmt(64.0 * p.spec.coupling * p.spec.coupling) << ',' << fmt(fit.profile.c) << ','
       << fmt(fit.profile.d) << ',' << fmt(fit.fitted_d) << '\n';
  }
  out.emit("localization.csv", os.str());
  return ok;
}

namespace detail {

inline nlohmann::ordered_json modulus_json(const ModulusReport& r) {
  nlohmann::ordered_json j;
  j["levels"] = nlohmann::ordered_json::array();
  for (const auto& row : r.levels)
    j["levels"].push_back({{"m_prime", row.level},
                           {"max_ratio", row.max_ratio},
                           {"argmax_j", row.argmax_j},
                           {"max_mass", row.max_mass},
                           {"length", row.length},
                           {"lambda_ratio", row.lambda_ratio},
                           {"min_ratio", row.min_ratio},
                           {"total_mass", row.total_mass}});
  j["empirical_lipschitz"] = r.empirical_lipschitz;
  j["theoretical_bound"] = r.theoretical_bound;
  j["c"] = r.c;
  j["d"] = r.d;
  j["epsilon"] = r.epsilon;
  j["N"] = r.size;
  j["level_stability"] = r.level_stability;
  j["holder_exponent"] = r.holder_exponent;
  j["verdict"] = r.verdict();
  return j;
}

inline std::string modulus_csv(const ModulusReport& r) {
  std::ostringstream os;
  os << "m_prime,max_ratio,argmax_j,max_mass,length,lambda_ratio,min_ratio,total_mass\n";
  for (const auto& row : r.levels)
    os << row.level << ',' << fmt(row.max_ratio) << ',' << row.argmax_j << ','
       << fmt(row.max_mass) << ',' << fmt(row.length) << ',' << fmt(row.lambda_ratio) << ','
       << fmt(row.min_ratio) << ',' << fmt(row.total_mass) << '\n';
  return os.str();
}

inline constexpr const char* finite_scale_note =
    "finite-scale certificate: covers dyadic intervals at the listed levels only; "
    "below 2^-m the truncated model's IDS is a step function";

struct ModulusRun {
  Problem problem;
  EnvelopeSummary envelope;
  ModulusReport report;
  nlohmann::ordered_json json;
};

inline ModulusRun run_modulus(const RunConfig& cfg) {
  const LevelRange levels = levels_of(cfg);
  const bool free = cfg.free;
  ModulusRun run{solve_problem(cfg, !free), {}, {}, {}};
  const auto ids = ids_from_spectrum(run.problem.data);
  if (!free) run.envelope = bulk_envelope(run.problem, cfg.margin);
  else run.envelope.note = "free operator: eigenvectors are extended, no decay envelope";

  if (run.envelope.envelope) {
    run.report = modulus_of_continuity(ids, run.problem.spec, levels, *run.envelope.envelope);
  } else {
    // Scan with a placeholder envelope, then void the bound.
    run.report = modulus_of_continuity(ids, run.problem.spec, levels, DecayProfile{1.0, 2.0});
    run.report.c = run.report.d = run.report.theoretical_bound = 0.0;
    run.report.pass = false;
  }
  run.json = modulus_json(run.report);
  if (!run.envelope.envelope) {
    run.json["c"] = nullptr;
    run.json["d"] = nullptr;
    run.json["theoretical_bound"] = nullptr;
  } else {
    double min_fitted = std::numeric_limits<double>::infinity();
    for (const auto& f : run.envelope.fits) min_fitted = std::min(min_fitted, f.fitted_d);
    run.json["bulk_eigenvectors"] = run.envelope.fits.size();
    run.json["min_fitted_d"] = min_fitted;
  }
  if (free) {
    // Band edge of the free Laplacian at E = 2.
    const auto fams = dyadic_families_near(2.0, run.problem.spec.coupling,
                                           LevelRange{std::max(levels.first, levels.last - 5),
                                                      levels.last});
    if (fams.size() >= 3) {
      const auto fit = holder_probe(ids, fams);
      run.json["edge_holder_exponent"] = fit.exponent;
      run.envelope.note += "; band-edge Hoelder exponent " + fmt(fit.exponent) +
                           " (square-root edge, not Lipschitz)";
    }
  }
  run.json["boundary"] = std::string(to_string(run.problem.boundary));
  run.json["variant"] = std::string(to_string(run.problem.variant));
  run.json["method"] = run.problem.data.method;
  if (!run.envelope.note.empty()) run.json["envelope_note"] = run.envelope.note;
  run.json["note"] = finite_scale_note;
  return run;
}

}  // namespace detail

inline int cmd_modulus(const RunConfig& cfg, const Output& out) {
  auto run = detail::run_modulus(cfg);
  out.emit("modulus.json", run.json.dump(2) + "\n");
  if (out.to_files()) out.emit("modulus.csv", detail::modulus_csv(run.report));
  out.console() << "verdict " << run.report.verdict() << '\n';
  return run.report.pass ? ok : verdict_fail;
}

/// Everything for one (m, eps, N): distality up to --kmax, eigenvalue
/// matching, landing at every level, decay envelope and the modulus scan.
inline int cmd_report(const RunConfig& cfg, const Output& out) {
  require(!cfg.free, "report: not available for the free operator");
  auto run = detail::run_modulus(cfg);
  const Problem& p = run.problem;
  nlohmann::ordered_json j;
  j["depth"] = p.spec.depth;
  j["epsilon"] = p.spec.coupling;
  j["epsilon_valid"] = valid_coupling(p.spec.depth);
  j["N"] = p.size;
  j["boundary"] = std::string(to_string(p.boundary));
  j["method"] = p.data.method;
  j["tool_version"] = std::string(tool_version);

  bool pass = run.report.pass;

  const DistalityCertifier certifier(cfg.distal_depth);
  double worst = std::numeric_limits<double>::infinity();
  bool distal_ok = true;
  for (std::int64_t k = 1; k <= cfg.kmax; ++k) {
    const auto c = certifier.certify(k);
    distal_ok = distal_ok && c.passes();
    worst = std::min(worst, c.margin / c.threshold());
  }
  j["distality"] = {{"kmax", cfg.kmax}, {"depth", cfg.distal_depth},
                    {"min_margin_over_threshold", worst}, {"pass", distal_ok}};
  pass = pass && distal_ok;

  try {
    const auto match = eigenvalue_site_matching(p.data, p.spec);
    const double bound = 64.0 * p.spec.coupling * p.spec.coupling;
    const double bulk = match.bulk_max_defect(cfg.margin);
    j["matching"] = {{"bijective", true},    {"max_defect", match.max_defect},
                     {"bulk_max_defect", bulk}, {"bound", bound},
                     {"pass", bulk <= bound}};
    pass = pass && bulk <= bound;
  } catch (const LocalizationError& e) {
    j["matching"] = {{"bijective", false}, {"error", e.what()}, {"pass", false}};
    pass = false;
  }

  auto landing = nlohmann::ordered_json::array();
  bool landing_ok = true;
  const LevelRange levels = levels_of(cfg);
  for (int lv = levels.first; lv <= std::min(levels.last, 12); ++lv) {
    std::size_t sd = 0, crossings = 0, boundary = 0, interior = 0;
    for (std::uint64_t jj = 0; jj < (std::uint64_t{1} << lv); ++jj) {
      const auto r = landing_verification(p.data, p.spec, DyadicInterval(lv, jj), cfg.margin);
      sd += r.symmetric_difference;
      crossings += r.endpoint_crossings;
      boundary += r.boundary_sites;
      interior += r.interior_violations;
    }
    landing_ok = landing_ok && interior == 0;
    landing.push_back({{"m_prime", lv},
                       {"symmetric_difference", sd},
                       {"endpoint_crossings", crossings},
                       {"boundary_sites", boundary},
                       {"interior_violations", interior}});
  }
  j["landing"] = landing;
  pass = pass && landing_ok;

  if (run.envelope.envelope) {
    double max_c = 0.0, min_d = std::numeric_limits<double>::infinity();
    for (const auto& f : run.envelope.fits) {
      max_c = std::max(max_c, f.profile.c);
      min_d = std::min(min_d, f.profile.d);
    }
    j["decay"] = {{"bulk_eigenvectors", run.envelope.fits.size()},
                  {"max_c", max_c},
                  {"min_d", min_d}};
  } else {
    j["decay"] = {{"error", run.envelope.note}};
  }
  j["modulus"] = run.json;
  j["verdict"] = pass ? "PASS" : "FAIL";
  out.emit("report.json", j.dump(2) + "\n");
  if (out.to_files()) out.console() << "verdict " << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? ok : verdict_fail;
}

/// Runs `cfg.command`, mapping library errors to exit codes.
inline int dispatch(const RunConfig& cfg, std::ostream& console, std::ostream& errors) {
  const Output out(console, cfg.out_dir);
  try {
    if (cfg.command == "sequence") return cmd_sequence(cfg, out);
    if (cfg.command == "distal") return cmd_distal(cfg, out);
    if (cfg.command == "landing") return cmd_landing(cfg, out);
    if (cfg.command == "lattice") return cmd_lattice(cfg, out);
    if (cfg.command == "spectrum") return cmd_spectrum(cfg, out);
    if (cfg.command == "ids") return cmd_ids(cfg, out);
    if (cfg.command == "localization") return cmd_localization(cfg, out);
    if (cfg.command == "modulus") return cmd_modulus(cfg, out);
    if (cfg.command == "report") return cmd_report(cfg, out);
    errors << "error: unknown command '" << cfg.command << "'\n";
    return usage;
  } catch (const PreconditionError& e) {
    errors << "error: " << e.what() << '\n';
    return usage;
  } catch (const NumericalError& e) {
    errors << "numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const std::filesystem::filesystem_error& e) {
    errors << "error: " << e.what() << '\n';
    return usage;
  }
}

}  // namespace lpids::cli
