// brwlab: simulation and numerical verification lab for branching random
// walks in time-random environments and their conditioned walks.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brwlab/acceptance.hpp"
#include "brwlab/branching.hpp"
#include "brwlab/conditioned.hpp"
#include "brwlab/criterion.hpp"
#include "brwlab/env_io.hpp"
#include "brwlab/harmonic.hpp"
#include "brwlab/renewal.hpp"
#include "brwlab/report_io.hpp"
#include "brwlab/spine.hpp"
#include "brwlab/tanaka.hpp"

namespace fs = std::filesystem;
using namespace brwlab;
using nlohmann::json;

namespace {

int exit_code_for(errc c) {
  switch (c) {
    case errc::bad_config:
    case errc::non_finite:
    case errc::not_boundary:
    case errc::no_common_tilt_point:
    case errc::lattice_incompatible:
    case errc::lattice_mismatch:
    case errc::unsupported_tail:
      return 2;
    case errc::horizon_exceeded:
    case errc::budget_exceeded:
    case errc::population_cap_exceeded:
    case errc::enumeration_too_large:
    case errc::count_overflow:
      return 4;
    default:
      return 3;
  }
}

struct OutputSink {
  fs::path dir;
  RunManifest manifest;

  OutputSink(const std::string& out_dir, const std::string& command, const std::string& config,
             std::uint64_t seed)
      : dir(out_dir), manifest(command, config, seed) {
    fs::create_directories(dir);
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(dir / name, std::ios::binary);
    f << content;
    manifest.add_output(name, content);
  }

  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  void finish() { manifest.save((dir / "manifest.json").string()); }
};

unsigned resolve_threads(unsigned flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("BRWRE_LAB_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return unsigned(v);
  }
  return 1;
}

std::vector<std::uint64_t> parse_horizons(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::strtoull(item.c_str(), nullptr, 10));
  if (out.empty()) fail(errc::bad_config, "empty horizon list");
  return out;
}

json assumptions_json(const AssumptionsReport& rep, const BoundaryReport& brep) {
  json j;
  j["nonextinction"] = rep.nonextinction;
  j["supercritical_possible"] = rep.supercritical_possible;
  j["positive_displacement_mass"] = rep.positive_displacement;
  j["moment_2_plus_delta"] = rep.moment_2_plus_delta;
  j["moment_finite"] = rep.moment_finite;
  j["delta"] = rep.delta;
  j["boundary_pass"] = brep.pass;
  j["boundary_tol"] = brep.tol;
  j["states"] = json::array();
  for (const auto& s : brep.per_state)
    j["states"].push_back({{"log_laplace_at_1", s.log_laplace_at_1},
                           {"mass_residual", s.mass_residual},
                           {"mean_residual", s.mean_residual},
                           {"pass", s.pass}});
  j["all_pass"] = rep.all_pass();
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branching random walk in random environment: simulation and verification lab"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string env_file, out_dir = "out";
  std::uint64_t seed = 1;
  unsigned threads_flag = 0;
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "master seed")->capture_default_str();
  app.add_option("--threads", threads_flag, "worker threads (0 = BRWRE_LAB_THREADS or 1)");

  // validate
  auto* c_validate = app.add_subcommand("validate", "check the standing assumptions of a law");
  double v_tol = 1e-9, v_delta = 1.0;
  c_validate->add_option("--env", env_file, "environment JSON")->required();
  c_validate->add_option("--tol", v_tol, "boundary tolerance")->capture_default_str();
  c_validate->add_option("--delta", v_delta, "moment exponent offset")->capture_default_str();

  // harmonic
  auto* c_harmonic = app.add_subcommand("harmonic", "tabulate the quenched harmonic function");
  std::int64_t h_ymin = 0, h_ymax = 10;
  double h_tol = 1e-8;
  std::uint64_t h_max_horizon = 1ull << 22;
  c_harmonic->add_option("--env", env_file)->required();
  c_harmonic->add_option("--y-min", h_ymin)->capture_default_str();
  c_harmonic->add_option("--y-max", h_ymax)->capture_default_str();
  c_harmonic->add_option("--tol", h_tol)->capture_default_str();
  c_harmonic->add_option("--max-horizon", h_max_horizon)->capture_default_str();

  // conditioned
  auto* c_cond = app.add_subcommand("conditioned", "marginals of the conditioned walk");
  std::uint64_t cd_n = 10;
  std::int64_t cd_beta = 0;
  std::size_t cd_samples = 0;
  c_cond->add_option("--env", env_file)->required();
  c_cond->add_option("--n", cd_n)->capture_default_str();
  c_cond->add_option("--beta", cd_beta)->capture_default_str();
  c_cond->add_option("--samples", cd_samples, "optional sample count for the empirical check")
      ->capture_default_str();

  // renewal
  auto* c_renewal = app.add_subcommand("renewal", "ladder renewal tables");
  std::int64_t rn_xmax = 512;
  std::string rn_method = "exact";
  std::uint64_t rn_budget = 200000;
  c_renewal->add_option("--env", env_file)->required();
  c_renewal->add_option("--x-max", rn_xmax)->capture_default_str();
  c_renewal->add_option("--method", rn_method)->check(CLI::IsMember({"exact", "monte_carlo"}))
      ->capture_default_str();
  c_renewal->add_option("--budget", rn_budget)->capture_default_str();

  // tanaka-test
  auto* c_tanaka = app.add_subcommand("tanaka-test", "excursion decomposition checks");
  std::size_t tk_trials = 20000;
  std::uint64_t tk_horizon = 512;
  c_tanaka->add_option("--env", env_file)->required();
  c_tanaka->add_option("--trials", tk_trials)->capture_default_str();
  c_tanaka->add_option("--horizon", tk_horizon)->capture_default_str();

  // divergence-probe
  auto* c_div = app.add_subcommand("divergence-probe", "series divergence diagnostics");
  double dv_power = 2.0;
  std::int64_t dv_beta = 0;
  std::size_t dv_trials = 300;
  std::string dv_horizons = "4096,16384,65536";
  c_div->add_option("--env", env_file)->required();
  c_div->add_option("--power", dv_power, "F(x) = (1+x_+)^-power")->capture_default_str();
  c_div->add_option("--beta", dv_beta)->capture_default_str();
  c_div->add_option("--trials", dv_trials)->capture_default_str();
  c_div->add_option("--horizons", dv_horizons)->capture_default_str();

  // brwre
  auto* c_brw = app.add_subcommand("brwre", "simulate the branching population");
  std::uint64_t bw_horizon = 40;
  std::size_t bw_trials = 100;
  std::string bw_betas = "0,2";
  std::uint64_t bw_cap = 10000000;
  c_brw->add_option("--env", env_file)->required();
  c_brw->add_option("--horizon", bw_horizon)->capture_default_str();
  c_brw->add_option("--trials", bw_trials)->capture_default_str();
  c_brw->add_option("--beta-set", bw_betas)->capture_default_str();
  c_brw->add_option("--cap", bw_cap)->capture_default_str();

  // spine-check
  auto* c_spine = app.add_subcommand("spine-check", "spinal decomposition checks");
  std::int64_t sp_beta = 0;
  std::uint64_t sp_n = 12;
  std::size_t sp_samples = 2000;
  c_spine->add_option("--env", env_file)->required();
  c_spine->add_option("--beta", sp_beta)->capture_default_str();
  c_spine->add_option("--n", sp_n)->capture_default_str();
  c_spine->add_option("--samples", sp_samples)->capture_default_str();

  // criterion
  auto* c_crit = app.add_subcommand("criterion", "moment criterion report");
  c_crit->add_option("--env", env_file)->required();

  // acceptance
  auto* c_accept = app.add_subcommand("acceptance", "run the acceptance suite");
  std::string suite = "primary";
  c_accept->add_option("--suite", suite)->check(CLI::IsMember({"primary"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  const unsigned threads = resolve_threads(threads_flag);

  try {
    std::ostringstream config;
    for (int i = 1; i < argc; ++i) config << argv[i] << " ";

    if (*c_validate) {
      OutputSink sink(out_dir, "validate", config.str(), seed);
      auto env = load_environment(env_file);
      auto brep = boundary_check(env, v_tol);
      auto arep = validate_assumptions(env, v_delta);
      json j = assumptions_json(arep, brep);
      sink.write_json("validate.json", j);
      sink.finish();
      std::cout << j.dump(2) << "\n";
      return arep.all_pass() && brep.pass ? 0 : 2;
    }

    if (*c_harmonic) {
      OutputSink sink(out_dir, "harmonic", config.str(), seed);
      auto env = load_environment(env_file);
      WalkPath walk{EnvironmentPath(env, seed)};
      CsvWriter csv({"y", "U", "error_bound", "horizon", "surviving_mass"});
      for (std::int64_t y = h_ymin; y <= h_ymax; ++y) {
        auto h = harmonic_u(walk, y, h_tol, h_max_horizon);
        csv.row(y, h.value, h.error_bound, h.horizon, h.surviving_mass);
      }
      csv.save((sink.dir / "harmonic.csv").string());
      sink.manifest.add_output("harmonic.csv", csv.str());
      sink.finish();
      std::cout << "wrote " << (sink.dir / "harmonic.csv") << "\n";
      return 0;
    }

    if (*c_cond) {
      OutputSink sink(out_dir, "conditioned", config.str(), seed);
      auto env = load_environment(env_file);
      HarmonicCache<WalkPath> u(WalkPath(EnvironmentPath(env, seed)), 1e-11);
      CsvWriter csv({"n", "x", "direct_mass", "chained_mass"});
      double worst_tv = 0.0;
      for (std::uint64_t n = 1; n <= cd_n; ++n) {
        auto direct = conditioned_marginal(u, n, cd_beta);
        auto chained = conditioned_marginal_chained(u, n, cd_beta);
        worst_tv = std::max(worst_tv, direct.tv_distance(chained));
        direct.for_each(
            [&](std::int64_t x, double m) { csv.row(n, x, m, chained.mass_at(x)); });
      }
      csv.save((sink.dir / "conditioned.csv").string());
      sink.manifest.add_output("conditioned.csv", csv.str());
      json j{{"dual_route_tv", worst_tv}, {"beta", cd_beta}, {"n", cd_n}};
      if (cd_samples > 0) {
        WeightedHistogram hist;
        RngStream master(seed, 0xC11);
        for (std::size_t t = 0; t < cd_samples; ++t) {
          RngStream rng = master.substream(t);
          hist.add(sample_conditioned_path(u, cd_beta, cd_n, rng).back());
        }
        std::map<std::int64_t, double> law;
        conditioned_marginal(u, cd_n, cd_beta).for_each(
            [&](std::int64_t x, double m) { law[x] = m; });
        auto rep = chi_square_vs_exact(hist, law, "sampler_vs_exact");
        j["sampler_chi_square_p"] = rep.p_value;
      }
      sink.write_json("conditioned.json", j);
      sink.finish();
      std::cout << j.dump(2) << "\n";
      return worst_tv <= 1e-8 ? 0 : 3;
    }

    if (*c_renewal) {
      OutputSink sink(out_dir, "renewal", config.str(), seed);
      auto env = load_environment(env_file);
      auto method = rn_method == "exact" ? RenewalMethod::exact : RenewalMethod::monte_carlo;
      auto table = renewal_functions(annealed_step(env), rn_xmax, method, rn_budget,
                                     RngStream(seed, 0xE));
      CsvWriter csv({"x", "r_minus", "rho_minus", "r_plus", "rho_script"});
      for (std::int64_t x = 0; x <= table.x_max; ++x)
        csv.row(x, table.r_minus[std::size_t(x)], table.rho_minus[std::size_t(x)],
                table.r_plus[std::size_t(x)], table.rho_script[std::size_t(x)]);
      csv.save((sink.dir / "renewal.csv").string());
      sink.manifest.add_output("renewal.csv", csv.str());
      json j{{"exact_minus", table.exact_minus},
             {"exact_plus", table.exact_plus},
             {"error_minus", table.error_minus},
             {"error_plus", table.error_plus}};
      sink.write_json("renewal.json", j);
      sink.finish();
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_tanaka) {
      OutputSink sink(out_dir, "tanaka-test", config.str(), seed);
      auto env = load_environment(env_file);
      HarmonicCache<WalkPath> u(WalkPath(EnvironmentPath(env, seed)), 1e-11);
      json j;
      CsvWriter csv({"k", "x", "chain_route", "walk_route"});
      double worst = 0.0;
      for (std::uint64_t k = 1; k <= 4; ++k) {
        auto res = tanaka_identity_check(u, k);
        worst = std::max(worst, res.max_residual);
        for (const auto& [x, lr] : res.per_x) csv.row(k, x, lr.first, lr.second);
      }
      j["identity_max_residual"] = worst;
      auto indep = tanaka_independence_test(env, seed, tk_trials, 256, seed + 1);
      j["independence_p"] = indep.perm.p_value;
      j["independence_used"] = indep.used;
      j["independence_discarded_fraction"] = indep.discarded_fraction;
      auto exc = excursion_law_test(env, tk_trials, tk_horizon, seed + 2);
      j["excursion_chi_square_p"] = exc.chi_square.p_value;
      j["excursion_unresolved"] = exc.unresolved_weight;
      j["excursion_exact_unresolved"] = exc.exact_unresolved;
      j["u0_estimate"] = exc.u0_estimate;
      j["u0_stderr"] = exc.u0_stderr;
      csv.save((sink.dir / "tanaka_identity.csv").string());
      sink.manifest.add_output("tanaka_identity.csv", csv.str());
      sink.write_json("tanaka.json", j);
      sink.finish();
      std::cout << j.dump(2) << "\n";
      return worst <= 1e-8 ? 0 : 3;
    }

    if (*c_div) {
      OutputSink sink(out_dir, "divergence-probe", config.str(), seed);
      auto env = load_environment(env_file);
      auto horizons = parse_horizons(dv_horizons);
      const double p = dv_power;
      auto probe = divergence_probe(
          env, dv_beta, [p](double x) { return std::pow(1.0 + std::max(x, 0.0), -p); }, dv_trials,
          horizons, seed);
      CsvWriter csv({"horizon", "median_partial_sum"});
      for (std::size_t i = 0; i < probe.horizons.size(); ++i)
        csv.row(probe.horizons[i], probe.median_partial_sums[i]);
      csv.save((sink.dir / "divergence.csv").string());
      sink.manifest.add_output("divergence.csv", csv.str());
      json j{{"growth_ratio", probe.growth_ratio},
             {"grows", probe.grows},
             {"plateaus", probe.plateaus},
             {"note", "growth/plateau flags are heuristic diagnostics of an a.s. dichotomy"}};
      sink.write_json("divergence.json", j);
      sink.finish();
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_brw) {
      OutputSink sink(out_dir, "brwre", config.str(), seed);
      auto env = load_environment(env_file);
      std::vector<std::int64_t> betas;
      for (auto b : parse_horizons(bw_betas)) betas.push_back(std::int64_t(b));
      std::vector<std::string> header{"trial", "n", "W_n", "D_n"};
      for (auto b : betas) header.push_back("D_n_beta" + std::to_string(b));
      header.push_back("min_position");
      CsvWriter csv(header);
      RngStream master(seed, 0xB);
      auto rows_per_trial = parallel_map<std::string>(bw_trials, threads, [&](std::size_t t) {
        RngStream rng = master.substream(t);
        auto traj = simulate_brw(env, rng.next_u64(), betas, bw_horizon, rng, bw_cap);
        std::ostringstream os;
        os.precision(17);
        for (const auto& row : traj.rows) {
          os << t << "," << row.n << "," << row.w << "," << row.d;
          for (double db : row.d_beta) os << "," << db;
          os << "," << row.min_position << "\r\n";
        }
        return os.str();
      });
      std::string body = csv.str();
      for (auto& r : rows_per_trial) body += r;
      std::ofstream f(sink.dir / "brwre.csv", std::ios::binary);
      f << body;
      f.close();
      sink.manifest.add_output("brwre.csv", body);
      sink.finish();
      std::cout << "wrote " << (sink.dir / "brwre.csv") << "\n";
      return 0;
    }

    if (*c_spine) {
      OutputSink sink(out_dir, "spine-check", config.str(), seed);
      auto env = load_environment(env_file);
      EnvironmentPath path(env, seed);
      HarmonicCache<WalkPath> u(WalkPath(path), 1e-11);
      json j;
      double worst_tv = 0.0, worst_post = 0.0, worst_norm = 0.0;
      for (std::uint64_t n : {1ull, 2ull, 4ull})
        worst_tv = std::max(worst_tv,
                            spine_law_check(u, path, sp_beta, 0, n, true).tv_distance);
      for (std::uint64_t n : {1ull, 2ull})
        worst_post = std::max(worst_post, spine_posterior_check(u, path, sp_beta, 0, n));
      CsvWriter csv({"sample", "step", "position", "selection_prob"});
      RngStream master(seed, 0x5);
      for (std::size_t t = 0; t < sp_samples; ++t) {
        RngStream rng = master.substream(t);
        auto tree = sample_spinal_tree(u, path, sp_beta, 0, sp_n, rng);
        for (std::uint64_t k = 0; k < sp_n; ++k) {
          csv.row(t, k + 1, tree.spine.positions[k + 1], tree.spine.selection_probs[k]);
          auto law = size_biased_offspring_law(u, path.state(k), k, tree.spine.positions[k],
                                               sp_beta);
          worst_norm = std::max(worst_norm, law.normalizer_deviation);
        }
      }
      csv.save((sink.dir / "spine.csv").string());
      sink.manifest.add_output("spine.csv", csv.str());
      j["exact_tv"] = worst_tv;
      j["posterior_residual"] = worst_post;
      j["normalizer_deviation"] = worst_norm;
      sink.write_json("spine.json", j);
      sink.finish();
      std::cout << j.dump(2) << "\n";
      return (worst_tv <= 1e-8 && worst_post <= 1e-8) ? 0 : 3;
    }

    if (*c_crit) {
      OutputSink sink(out_dir, "criterion", config.str(), seed);
      auto env = load_environment(env_file);
      auto rep = moment_criterion(env);
      json j;
      auto put = [&](const char* key, const MomentStatus& m) {
        json jm;
        jm["finite"] = m.finite;
        if (m.finite && !std::isnan(m.value)) jm["value"] = m.value;
        if (!m.finite) jm["divergence_log_exponent"] = m.divergence_exponent;
        j[key] = jm;
      };
      put("y_log2", rep.y_log2);
      put("y_log1", rep.y_log1);
      put("z_log", rep.z_log);
      j["nondegenerate"] = rep.nondegenerate;
      j["case"] = rep.flag == DegeneracyCase::none
                      ? "none"
                      : rep.flag == DegeneracyCase::case_i
                            ? "i"
                            : rep.flag == DegeneracyCase::case_ii ? "ii" : "iii";
      j["note"] = rep.note;
      sink.write_json("criterion.json", j);
      sink.finish();
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*c_accept) {
      OutputSink sink(out_dir, "acceptance", config.str(), seed);
      auto results = run_acceptance(seed, threads, &std::cout);
      // Timing stays on stdout; the CSV artifact is bit-reproducible.
      CsvWriter csv({"id", "name", "pass", "detail"});
      bool all = true;
      for (const auto& r : results) {
        csv.row(r.id, r.name, r.pass ? 1 : 0, r.detail);
        all = all && r.pass;
      }
      csv.save((sink.dir / "acceptance.csv").string());
      sink.manifest.add_output("acceptance.csv", csv.str());
      sink.finish();
      return all ? 0 : 3;
    }
  } catch (const Error& e) {
    json j{{"error", e.code_name()}, {"message", e.what()}};
    for (const auto& [k, v] : e.details()) j["details"][k] = v;
    std::cerr << j.dump(2) << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Unhandled"}, {"message", e.what()}}.dump(2) << "\n";
    return 3;
  }
  return 0;
}
