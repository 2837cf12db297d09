#pragma once

// Command-line front end: sfspde <subcommand> [flags].
// Exit codes: 0 pass, 1 verdict fail, 2 usage or configuration error.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "slowfast/assumptions.hpp"
#include "slowfast/averaging.hpp"
#include "slowfast/config.hpp"
#include "slowfast/errors.hpp"
#include "slowfast/experiments.hpp"
#include "slowfast/model.hpp"
#include "slowfast/simulator.hpp"
#include "slowfast/zvonkin.hpp"

#ifndef SLOWFAST_VERSION
#define SLOWFAST_VERSION "0.1.0"
#endif

namespace slowfast::cli {

using Json = nlohmann::ordered_json;

enum ExitCode : int { kPass = 0, kFail = 1, kUsage = 2 };

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

struct OutputRecord {
  std::string path;  // "-" for stdout
  std::string sha256;
  std::string digest_excludes;
};

/// Everything needed to rerun a command and check its outputs.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> args;
  Json config;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  std::vector<OutputRecord> outputs;
  int exit_code = 0;

  Json to_json() const {
    Json j;
    j["tool"] = "sfspde";
    j["version"] = SLOWFAST_VERSION;
    j["subcommand"] = subcommand;
    j["args"] = args;
    j["seed"] = seed;
    j["config"] = config;
    j["wall_time_s"] = wall_time_s;
    j["exit_code"] = exit_code;
    Json outs = Json::array();
    for (const auto& o : outputs) {
      Json e{{"path", o.path}, {"sha256", o.sha256}};
      if (!o.digest_excludes.empty()) e["digest_excludes"] = o.digest_excludes;
      outs.push_back(e);
    }
    j["outputs"] = outs;
    return j;
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write output file '" + path + "'");
  f << content;
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

/// Emits content to `path` (or `out` when path is empty) and records the digest.
inline void emit(RunManifest& man, std::ostream& out, const std::string& path,
                 const std::string& content, const std::string& digest_source = {},
                 const std::string& excludes = {}) {
  if (path.empty()) {
    out << content;
  } else {
    write_file(path, content);
  }
  man.outputs.push_back({path.empty() ? "-" : path,
                         sha256_hex(digest_source.empty() ? content : digest_source), excludes});
}

inline std::uint64_t parse_seed_text(const std::string& s, const std::string& origin) {
  try {
    std::size_t used = 0;
    if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
    const unsigned long long v = std::stoull(s, &used, 10);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin + ": '" + s + "' is not a decimal 64-bit seed");
  }
}

inline SpectralField read_field(const std::string& spec, std::size_t n_modes) {
  SpectralField x(n_modes);
  if (spec.empty() || spec == "zero") return x;
  std::ifstream in(spec);
  if (!in) throw ConfigError("cannot read field file '" + spec + "'");
  std::string tok;
  std::size_t k = 0;
  std::ostringstream all;
  all << in.rdbuf();
  std::string text = all.str();
  for (char& c : text)
    if (c == ',' || c == ';') c = ' ';
  std::istringstream ss(text);
  while (ss >> tok) {
    if (k >= n_modes) throw ConfigError("field file '" + spec + "' has more than n_modes values");
    try {
      std::size_t used = 0;
      x[k] = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("field file '" + spec + "': '" + tok + "' is not a number");
    }
    ++k;
  }
  return x;
}

inline Json assumption_json(const AssumptionReport& rep, const ModelConfig& m) {
  Json j;
  j["theta"] = rep.theta;
  j["zeta"] = rep.zeta;
  j["theta_admissible"] = {0.0, rep.theta_max};
  j["kappa1"] = rep.kappa1;
  j["kappa2"] = rep.kappa2;
  j["spectral_gap"] = rep.gap;
  j["constants"] = {{"alpha", m.alpha}, {"beta", m.beta}, {"gamma", m.gamma},
                    {"l_f", m.l_f},     {"source", m.constants_note}};
  Json checks = Json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"id", c.id}, {"status", to_string(c.status)}, {"witness", c.witness},
                      {"detail", c.detail}});
  j["checks"] = checks;
  j["all_hold"] = rep.all_hold();
  return j;
}

}  // namespace detail

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_mc;
  std::optional<unsigned> threads;
  std::string out;
  std::string manifest;
};

inline const std::vector<std::string>& lemma_names() {
  static const std::vector<std::string> names = {"contraction", "ergodicity", "holder",
                                                 "increments",  "aux-fast",   "correlation",
                                                 "moments",     "strong"};
  return names;
}

/// Runs one named experiment on the resolved configuration.
inline ExperimentReport run_lemma(const std::string& lemma, const RunConfig& rc) {
  const ModelConfig& m = rc.model;
  const std::uint64_t seed = rc.seed;
  const unsigned th = rc.threads;
  auto n_or = [&](std::size_t fallback) { return rc.n_mc ? rc.n_mc : fallback; };
  if (lemma == "contraction") {
    ContractionParams p;
    p.seed = seed;
    p.threads = th;
    p.n_mc = n_or(p.n_mc);
    return contraction_test(m, p);
  }
  if (lemma == "ergodicity") {
    ErgodicityParams p = ErgodicityParams::defaults(m);
    p.seed = seed;
    p.mixing_replicas = n_or(p.mixing_replicas);
    return ergodicity_test(m, p);
  }
  if (lemma == "holder") {
    HolderParams p = HolderParams::defaults(m);
    p.seed = seed;
    p.n_pairs = n_or(p.n_pairs);
    return holder_test(m, p);
  }
  if (lemma == "increments") {
    IncrementParams p;
    p.theta = rc.theta;
    p.eps = rc.eps;
    p.seed = seed;
    p.threads = th;
    p.n_mc = n_or(p.n_mc);
    return increment_scaling(m, p);
  }
  if (lemma == "aux-fast") {
    AuxFastParams p;
    p.theta = rc.theta;
    p.eps = rc.eps;
    p.seed = seed;
    p.threads = th;
    p.n_mc = n_or(p.n_mc);
    return aux_fast_error(m, p);
  }
  if (lemma == "correlation") {
    CorrelationParams p;
    p.seed = seed;
    p.threads = th;
    p.n_mc = n_or(p.n_mc);
    return correlation_decay(m, p);
  }
  if (lemma == "moments") {
    MomentParams p;
    p.seed = seed;
    p.threads = th;
    p.n_mc = n_or(p.n_mc);
    return moment_sweep(m, p);
  }
  if (lemma == "strong") {
    StrongErrorParams p = StrongErrorParams::defaults(m);
    p.theta = rc.theta;
    p.seed = seed;
    p.threads = th;
    p.n_mc = n_or(p.n_mc);
    return strong_error(m, p);
  }
  throw ConfigError("unknown lemma '" + lemma + "'");
}

namespace detail {

inline RunConfig resolve(const CommonFlags& f) {
  RunConfig rc = f.config.empty() ? parse_config_text("") : parse_config(f.config);
  if (const char* env = std::getenv("SPDE_SEED"); env && *env)
    rc.seed = parse_seed_text(env, "SPDE_SEED");
  if (f.seed) rc.seed = *f.seed;
  if (f.n_mc) rc.n_mc = *f.n_mc;
  if (f.threads) rc.threads = *f.threads;
  return rc;
}

inline std::string with_suffix(const std::string& prefix, const std::string& suffix) {
  return prefix.empty() ? std::string() : prefix + suffix;
}

inline int emit_report(const ExperimentReport& rep, RunManifest& man, const CommonFlags& f,
                       std::ostream& out) {
  const std::string body = rep.to_json(true).dump(2) + "\n";
  const std::string canonical = rep.to_json(false).dump(2) + "\n";
  emit(man, out, with_suffix(f.out, ".json"), body, canonical, "wall_time_s");
  if (!f.out.empty()) emit(man, out, f.out + ".csv", rep.to_csv());
  return rep.passed() ? kPass : kFail;
}

}  // namespace detail

/// Parses argv and runs the subcommand. `out` receives results, `err`
/// diagnostics and, when no output file is given, the run manifest.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Slow-fast SPDE spectral-Galerkin toolkit", "sfspde"};
  app.set_version_flag("--version", std::string(SLOWFAST_VERSION));
  app.require_subcommand(1);

  CommonFlags f;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "configuration file (key = value)");
    sub->add_option("--seed", f.seed, "64-bit seed (overrides SPDE_SEED and the config)");
    sub->add_option("--out", f.out, "output path or prefix");
    sub->add_option("--manifest", f.manifest, "run manifest path");
  };
  auto mc_flags = [&](CLI::App* sub) {
    sub->add_option("--n-mc", f.n_mc, "Monte-Carlo sample count");
    sub->add_option("--threads", f.threads, "worker threads (0: all cores)");
  };

  // simulate
  std::optional<double> sim_eps, sim_t, sim_dt;
  std::size_t sim_every = 1;
  auto* sim = app.add_subcommand("simulate", "coupled slow-fast trajectory as CSV");
  common(sim);
  sim->add_option("--eps", sim_eps, "time-scale ratio in (0, 1)");
  sim->add_option("--T", sim_t, "horizon");
  sim->add_option("--dt", sim_dt, "macro step");
  sim->add_option("--every", sim_every, "write every n-th macro step")->check(CLI::PositiveNumber);

  // average
  std::string avg_x = "zero";
  std::optional<double> avg_tb, avg_ta, avg_dt;
  std::optional<std::size_t> avg_rep;
  auto* avg = app.add_subcommand("average", "estimate the averaged drift at a point");
  common(avg);
  avg->add_option("--x", avg_x, "slow state: coefficient file or 'zero'");
  avg->add_option("--Tb", avg_tb, "burn-in time");
  avg->add_option("--Ta", avg_ta, "averaging time");
  avg->add_option("--dt", avg_dt, "frozen-equation step");
  avg->add_option("--replicas", avg_rep, "independent replicas");

  // converge
  std::vector<double> conv_eps;
  auto* conv = app.add_subcommand("converge", "strong error E sup|X^eps - Xbar| against eps");
  common(conv);
  mc_flags(conv);
  conv->add_option("--eps-grid", conv_eps, "eps values");

  // check
  std::optional<double> chk_theta;
  auto* chk = app.add_subcommand("check", "check assumptions on the configured model");
  common(chk);
  chk->add_option("--theta", chk_theta, "theta in (0, 1)");

  // zvonkin
  std::size_t zv_dim = 1;
  std::optional<std::size_t> zv_grid;
  std::vector<double> zv_lambda{1.0, 10.0, 100.0};
  auto* zv = app.add_subcommand("zvonkin", "solve lambda U - Lbar U = Bbar at truncated dimension");
  common(zv);
  zv->add_option("--dim", zv_dim, "truncated dimension (1-3)")->check(CLI::Range(1, 3));
  zv->add_option("--lambda", zv_lambda, "resolvent parameters, increasing");
  zv->add_option("--grid", zv_grid, "nodes per axis");

  // verify
  std::string lemma;
  auto* ver = app.add_subcommand("verify", "run one lemma experiment");
  common(ver);
  mc_flags(ver);
  ver->add_option("--lemma", lemma, "experiment name")
      ->required()
      ->check(CLI::IsMember(lemma_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kPass;
  } catch (const CLI::CallForVersion&) {
    out << SLOWFAST_VERSION << "\n";
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  RunManifest man;
  man.subcommand = active->get_name();
  for (int i = 1; i < argc; ++i) man.args.emplace_back(argv[i]);
  const auto start = std::chrono::steady_clock::now();
  int code = kPass;
  try {
    RunConfig rc = detail::resolve(f);
    man.seed = rc.seed;
    if (active == sim) {
      if (sim_eps) rc.eps = *sim_eps;
      if (sim_t) rc.horizon = *sim_t;
      if (sim_dt) rc.scheme.dt_macro = *sim_dt;
      validate_eps(rc.eps);
      man.config = rc.to_json();
      const ModelConfig& m = rc.model;
      NoiseStream w1 = NoiseStream::derive(rc.seed, 0, NoiseRole::slow);
      NoiseStream w2 = NoiseStream::derive(rc.seed, 0, NoiseRole::fast);
      SlowFastIntegrator integ(m, rc.scheme, rc.eps);
      SlowFastState s{SpectralField(m.n_modes), SpectralField(m.n_modes), 0.0, rc.eps};
      const std::size_t n = step_count(rc.horizon, rc.scheme.dt_macro);
      const std::size_t shown = std::min<std::size_t>(3, m.n_modes);
      std::string csv = "t,abs_x,norm_theta_x,abs_y";
      for (std::size_t k = 1; k <= shown; ++k) csv += ",x_" + std::to_string(k);
      for (std::size_t k = 1; k <= shown; ++k) csv += ",y_" + std::to_string(k);
      csv += "\n";
      for (std::size_t i = 0; i <= n; ++i) {
        if (i % sim_every == 0 || i == n) {
          csv += detail::fmt_double(s.t) + "," + detail::fmt_double(s.x.norm()) + "," +
                 detail::fmt_double(h_norm(s.x, m.eigs, rc.theta)) + "," +
                 detail::fmt_double(s.y.norm());
          for (std::size_t k = 0; k < shown; ++k) csv += "," + detail::fmt_double(s.x[k]);
          for (std::size_t k = 0; k < shown; ++k) csv += "," + detail::fmt_double(s.y[k]);
          csv += "\n";
        }
        if (i < n) integ.step(s, w1, w2);
      }
      detail::emit(man, out, f.out, csv);
    } else if (active == avg) {
      if (avg_tb) rc.averaging.burn_in = *avg_tb;
      if (avg_ta) rc.averaging.avg_time = *avg_ta;
      if (avg_rep) rc.averaging.replicas = *avg_rep;
      rc.averaging.align_to(avg_dt ? *avg_dt : rc.averaging.dt);
      man.config = rc.to_json();
      const SpectralField x = detail::read_field(avg_x, rc.model.n_modes);
      const BbarEstimate est = estimate_bbar(x, rc.averaging, rc.model, rc.seed);
      std::string csv = "mode,value,stderr\n";
      for (std::size_t k = 0; k < rc.model.n_modes; ++k)
        csv += std::to_string(k + 1) + "," + detail::fmt_double(est.value[k]) + "," +
               detail::fmt_double(est.mode_std_error[k]) + "\n";
      detail::emit(man, out, f.out, csv);
      err << "|Bbar(x)| = " << est.value.norm() << " +- " << est.std_error << "\n";
    } else if (active == conv) {
      man.config = rc.to_json();
      StrongErrorParams p = StrongErrorParams::defaults(rc.model);
      p.theta = rc.theta;
      p.seed = rc.seed;
      p.threads = rc.threads;
      if (rc.n_mc) p.n_mc = rc.n_mc;
      if (!conv_eps.empty()) p.eps_grid = conv_eps;
      code = detail::emit_report(strong_error(rc.model, p), man, f, out);
    } else if (active == chk) {
      if (chk_theta) rc.theta = *chk_theta;
      if (!(rc.theta > 0.0 && rc.theta < 1.0)) throw ConfigError("--theta must lie in (0, 1)");
      man.config = rc.to_json();
      AssumptionOptions opt;
      opt.seed = rc.seed;
      const AssumptionReport rep = check_assumptions(rc.model, rc.theta, opt);
      std::ostringstream table;
      table << "model " << rc.model.name << ", theta = " << rc.theta << "\n";
      for (const auto& c : rep.checks)
        table << std::left << std::setw(4) << c.id << " " << std::setw(14) << to_string(c.status)
              << " " << c.detail << "\n";
      table << "constants: " << rc.model.constants_note << "\n";
      out << table.str();
      const std::string body = detail::assumption_json(rep, rc.model).dump(2) + "\n";
      if (!f.out.empty()) detail::emit(man, out, f.out, body);
      man.outputs.push_back({"-", cli::sha256_hex(table.str()), ""});
      code = rep.all_hold() ? kPass : kFail;
    } else if (active == zv) {
      man.config = rc.to_json();
      ZvonkinSetup setup;
      setup.dim = zv_dim;
      setup.nodes_per_axis = zv_grid ? *zv_grid : (zv_dim == 1 ? 41 : zv_dim == 2 ? 15 : 9);
      setup.averaging = rc.averaging;
      setup.seed = rc.seed;
      const ZvonkinProblem prob = zvonkin_problem(rc.model, setup);
      std::string csv = "lambda";
      for (std::size_t a = 1; a <= zv_dim; ++a) csv += ",x_" + std::to_string(a);
      for (std::size_t j = 1; j <= zv_dim; ++j) csv += ",U_" + std::to_string(j);
      for (std::size_t j = 1; j <= zv_dim; ++j)
        for (std::size_t k = 1; k <= zv_dim; ++k)
          csv += ",DU_" + std::to_string(j) + "_" + std::to_string(k);
      csv += "\n";
      Json table = Json::array();
      bool ok = true;
      double prev_u = std::numeric_limits<double>::infinity(), prev_du = prev_u;
      std::ostringstream text;
      text << "lambda      |U|_inf       |DU|_inf      iterations  residual/|G|\n";
      const double g_sup = prob.g.sup_norm();
      for (double lam : zv_lambda) {
        const PicardResult r = picard_solve(prob.g, prob.bbar, lam, prob.kernel);
        const double rel = g_sup > 0.0 ? r.residual / g_sup : r.residual;
        ok = ok && r.converged && rel < 1e-2 && r.u_sup() < prev_u && r.du_sup() < prev_du;
        prev_u = r.u_sup();
        prev_du = r.du_sup();
        if (!r.converged) err << r.message << "\n";
        text << std::left << std::setw(12) << lam << std::setw(14) << r.u_sup() << std::setw(14)
             << r.du_sup() << std::setw(12) << r.iterations << rel << "\n";
        table.push_back({{"lambda", lam},
                         {"u_sup", r.u_sup()},
                         {"du_sup", r.du_sup()},
                         {"iterations", r.iterations},
                         {"converged", r.converged},
                         {"residual_rel", rel}});
        Point p;
        for (std::size_t i = 0; i < prob.g.size(); ++i) {
          prob.g.node(i, p);
          csv += detail::fmt_double(lam);
          for (double v : p) csv += "," + detail::fmt_double(v);
          for (std::size_t j = 0; j < zv_dim; ++j) csv += "," + detail::fmt_double(r.u.at(i, j));
          for (std::size_t j = 0; j < zv_dim; ++j)
            for (std::size_t k = 0; k < zv_dim; ++k)
              csv += "," + detail::fmt_double(r.du[k].at(i, j));
          csv += "\n";
        }
      }
      out << text.str();
      if (!f.out.empty()) {
        detail::emit(man, out, f.out, csv);
        detail::emit(man, out, f.out + ".json", Json{{"d_lambda", table}}.dump(2) + "\n");
      } else {
        man.outputs.push_back({"-", cli::sha256_hex(text.str()), ""});
      }
      code = ok ? kPass : kFail;
    } else if (active == ver) {
      man.config = rc.to_json();
      code = detail::emit_report(run_lemma(lemma, rc), man, f, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IntegrationError& e) {
    err << "integration error: " << e.what() << "\n";
    return kFail;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFail;
  }
  man.exit_code = code;
  man.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string manifest_path =
      !f.manifest.empty() ? f.manifest : detail::with_suffix(f.out, ".manifest.json");
  const std::string body = man.to_json().dump(2) + "\n";
  if (manifest_path.empty()) {
    err << body;
  } else {
    detail::write_file(manifest_path, body);
  }
  return code;
}

}  // namespace slowfast::cli
