#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsde/backward.hpp"
#include "fbsde/delay_condition.hpp"
#include "fbsde/errors.hpp"
#include "fbsde/feynman_kac.hpp"
#include "fbsde/forward.hpp"
#include "fbsde/large_investor.hpp"
#include "fbsde/levy.hpp"
#include "fbsde/path.hpp"

namespace fbsde {

inline constexpr const char* kVersion = "0.1.0";

/// A fully validated experiment description. Coefficients are chosen from
/// named presets; arbitrary user code is out of scope.
struct Scenario {
    // model
    std::vector<LevyAtom> atoms;  // empty = no jumps

    // forward: constant | linear | geometric | merton | delayed_drift
    std::string forward_preset = "constant";
    double x0 = 1.0;
    double fwd_mu = 0.0;
    double fwd_sigma = 0.0;
    double fwd_delay = 0.0;  // delayed_drift lag

    // generator: zero | discounting | delayed_integral
    std::string generator_preset = "zero";
    double rho = 0.0;
    double gen_K = 0.0;
    double gen_L = 0.0;
    double gen_delta = 0.0;
    std::vector<std::pair<double, double>> alpha_atoms;  // (theta, weight)

    // terminal: constant | identity | square
    std::string terminal_preset = "constant";
    double terminal_value = 1.0;

    // numerics
    double T = 1.0;
    double dt = 0.01;
    std::size_t n_paths = 1000;
    std::uint64_t seed = 1;
    double tol = 1e-4;
    std::size_t max_iter = 50;
    unsigned degree = 3;
    unsigned threads = 1;
    double verify_tol = 0.05;

    // market (hedge mode)
    double mkt_r = 0.0;
    double mkt_mu = 0.0;
    double mkt_sigma = 1.0;
    double mkt_kappa = 0.0;
    double mkt_delta = 0.0;
    double mkt_s0 = 1.0;

    // simulate | solve | verify | certify | hedge
    std::string mode = "solve";

    BasisSpec basis() const { return BasisSpec{degree, true}; }

    LevyModel model() const {
        return atoms.empty() ? LevyModel::none() : LevyModel::from_atoms(atoms);
    }

    ForwardCoefficients forward() const {
        auto c = ForwardCoefficients::zero();
        const double mu = fwd_mu, sig = fwd_sigma, lag = fwd_delay;
        if (forward_preset == "constant") {
            // frozen at x0
        } else if (forward_preset == "linear") {
            c.b = [mu](double t, const CadlagPath& x) {
                return std::vector<double>{mu * x.eval1(t)};
            };
            c.sigma = [sig](double, const CadlagPath&) {
                return std::vector<double>{sig};
            };
        } else if (forward_preset == "geometric" ||
                   forward_preset == "merton") {
            c.b = [mu](double t, const CadlagPath& x) {
                return std::vector<double>{mu * x.eval1(t)};
            };
            c.sigma = [sig](double t, const CadlagPath& x) {
                return std::vector<double>{sig * x.eval1(t)};
            };
            if (forward_preset == "merton")
                c.gamma = [](double t, const CadlagPath& x, double z) {
                    return std::vector<double>{x.eval1(t) * z};
                };
        } else if (forward_preset == "delayed_drift") {
            c.b = [mu, lag](double t, const CadlagPath& x) {
                const double lagged =
                    segment(x, t, lag > 0.0 ? lag : x.dt()).at_offset1(-lag);
                return std::vector<double>{mu * lagged};
            };
            c.sigma = [sig](double, const CadlagPath&) {
                return std::vector<double>{sig};
            };
        } else {
            throw ConfigError("scenario: unknown forward preset '" +
                              forward_preset + "'");
        }
        c.lipschitz_ell = std::abs(mu) + std::abs(sig);
        return c;
    }

    DelayMeasure alpha() const {
        if (alpha_atoms.empty())
            return DelayMeasure::unit_atom_at(gen_delta > 0.0 ? -gen_delta
                                                              : 0.0);
        DelayMeasure a;
        a.atoms = alpha_atoms;
        return a;
    }

    GeneratorSpec generator() const {
        GeneratorSpec g = GeneratorSpec::zero();
        g.K = gen_K;
        g.L = gen_L;
        g.delta = gen_delta;
        g.alpha = alpha();
        if (generator_preset == "zero") {
            // keep f = 0
        } else if (generator_preset == "discounting") {
            const double r = rho;
            g.f = [r](double, const CadlagPath&, double y,
                      std::span<const double>, double, const Segment&) {
                return -r * y;
            };
            g.L = std::max(g.L, std::abs(r));
        } else if (generator_preset == "delayed_integral") {
            const double k = gen_K;
            const DelayMeasure a = alpha();
            g.f = [k, a](double, const CadlagPath&, double,
                         std::span<const double>, double,
                         const Segment& yhat) {
                return k * alpha_integral(yhat, a);
            };
        } else {
            throw ConfigError("scenario: unknown generator preset '" +
                              generator_preset + "'");
        }
        return g;
    }

    TerminalSpec terminal() const {
        if (terminal_preset == "constant")
            return TerminalSpec::constant(terminal_value);
        if (terminal_preset == "identity")
            return TerminalSpec{
                [](const CadlagPath& x) { return x.eval1(x.t_end()); }, 1.0,
                1.0};
        if (terminal_preset == "square")
            return TerminalSpec{
                [](const CadlagPath& x) {
                    const double v = x.eval1(x.t_end());
                    return v * v;
                },
                1.0, 2.0};
        throw ConfigError("scenario: unknown terminal preset '" +
                          terminal_preset + "'");
    }

    MarketModel market() const {
        auto m = MarketModel::flat_rates(mkt_r, mkt_mu, mkt_sigma, mkt_s0);
        m.model = model();
        if (!atoms.empty())
            m.gamma_market = [](double, double z) { return z; };
        if (mkt_kappa != 0.0) {
            m.delta = mkt_delta;
            m.alpha = DelayMeasure::unit_atom_at(-mkt_delta);
            const double mu0 = mkt_mu, kap = mkt_kappa;
            m.mu = [mu0, kap, alpha = m.alpha](double, double,
                                               const Segment& seg) {
                return mu0 + kap * alpha_integral(seg, alpha);
            };
            m.delay_K = std::abs(kap);
        }
        m.lip_L = std::abs(mkt_r) + std::abs(mkt_mu);
        return m;
    }

    void validate() const {
        if (dt <= 0.0 || T <= 0.0)
            throw ConfigError("scenario: T and dt must be > 0");
        if (!detail::grid_aligned(T, dt))
            throw ConfigError("scenario: T = " + std::to_string(T) +
                              " is not an integer multiple of dt = " +
                              std::to_string(dt));
        for (auto [name, value] :
             std::initializer_list<std::pair<const char*, double>>{
                 {"generator.delta", gen_delta},
                 {"forward.delay", fwd_delay},
                 {"market.delta", mkt_delta}})
            if (value > 0.0 && !detail::grid_aligned(value, dt))
                throw ConfigError("scenario: " + std::string(name) + " = " +
                                  std::to_string(value) +
                                  " is not an integer multiple of dt = " +
                                  std::to_string(dt));
        if (n_paths < 10 * basis().size(1))
            throw ConfigError(
                "scenario: n_paths must be >= 10 x basis size (" +
                std::to_string(10 * basis().size(1)) + ")");
        if (mode != "simulate" && mode != "solve" && mode != "verify" &&
            mode != "certify" && mode != "hedge")
            throw ConfigError("scenario: unknown mode '" + mode + "'");
        forward();
        generator().validate();
        terminal();
        if (gen_delta > 0.0) alpha().validate(gen_delta);
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                const std::string& section,
                                const std::set<std::string>& allowed) {
    for (const auto& item : obj.items())
        if (!allowed.count(item.key()))
            throw ConfigError("scenario: unknown key '" + item.key() +
                              "' in section '" + section + "'");
}

template <typename T>
void read_key(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

/// Parse and validate a scenario from JSON text. Unknown keys are rejected
/// with their section; parse errors carry the byte offset from the JSON
/// parser.
inline Scenario load_scenario(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    detail::reject_unknown_keys(j, "(top level)",
                                {"model", "forward", "generator", "terminal",
                                 "numerics", "market", "mode"});
    Scenario s;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown_keys(m, "model", {"atoms"});
        if (m.contains("atoms"))
            for (const auto& a : m.at("atoms")) {
                detail::reject_unknown_keys(a, "model.atoms", {"z", "w"});
                s.atoms.push_back({a.at("z").get<double>(),
                                   a.at("w").get<double>()});
            }
    }
    if (j.contains("forward")) {
        const auto& f = j.at("forward");
        detail::reject_unknown_keys(f, "forward",
                                    {"preset", "x0", "mu", "sigma", "delay"});
        detail::read_key(f, "preset", s.forward_preset);
        detail::read_key(f, "x0", s.x0);
        detail::read_key(f, "mu", s.fwd_mu);
        detail::read_key(f, "sigma", s.fwd_sigma);
        detail::read_key(f, "delay", s.fwd_delay);
    }
    if (j.contains("generator")) {
        const auto& g = j.at("generator");
        detail::reject_unknown_keys(
            g, "generator", {"preset", "rho", "K", "L", "delta", "alpha"});
        detail::read_key(g, "preset", s.generator_preset);
        detail::read_key(g, "rho", s.rho);
        detail::read_key(g, "K", s.gen_K);
        detail::read_key(g, "L", s.gen_L);
        detail::read_key(g, "delta", s.gen_delta);
        if (g.contains("alpha"))
            for (const auto& a : g.at("alpha")) {
                detail::reject_unknown_keys(a, "generator.alpha",
                                            {"theta", "w"});
                s.alpha_atoms.emplace_back(a.at("theta").get<double>(),
                                           a.at("w").get<double>());
            }
    }
    if (j.contains("terminal")) {
        const auto& t = j.at("terminal");
        detail::reject_unknown_keys(t, "terminal", {"preset", "value"});
        detail::read_key(t, "preset", s.terminal_preset);
        detail::read_key(t, "value", s.terminal_value);
    }
    if (j.contains("numerics")) {
        const auto& n = j.at("numerics");
        detail::reject_unknown_keys(
            n, "numerics",
            {"T", "dt", "n_paths", "seed", "tol", "max_iter", "degree",
             "threads", "verify_tol"});
        detail::read_key(n, "T", s.T);
        detail::read_key(n, "dt", s.dt);
        detail::read_key(n, "n_paths", s.n_paths);
        detail::read_key(n, "seed", s.seed);
        detail::read_key(n, "tol", s.tol);
        detail::read_key(n, "max_iter", s.max_iter);
        detail::read_key(n, "degree", s.degree);
        detail::read_key(n, "threads", s.threads);
        detail::read_key(n, "verify_tol", s.verify_tol);
    }
    if (j.contains("market")) {
        const auto& m = j.at("market");
        detail::reject_unknown_keys(
            m, "market", {"r", "mu", "sigma", "kappa", "delta", "s0"});
        detail::read_key(m, "r", s.mkt_r);
        detail::read_key(m, "mu", s.mkt_mu);
        detail::read_key(m, "sigma", s.mkt_sigma);
        detail::read_key(m, "kappa", s.mkt_kappa);
        detail::read_key(m, "delta", s.mkt_delta);
        detail::read_key(m, "s0", s.mkt_s0);
    }
    detail::read_key(j, "mode", s.mode);
    s.validate();
    return s;
}

/// Serialize every field; load_scenario(serialize(s)) reproduces s.
inline std::string serialize(const Scenario& s) {
    nlohmann::json j;
    for (const auto& a : s.atoms)
        j["model"]["atoms"].push_back({{"z", a.z}, {"w", a.w}});
    j["forward"] = {{"preset", s.forward_preset}, {"x0", s.x0},
                    {"mu", s.fwd_mu},             {"sigma", s.fwd_sigma},
                    {"delay", s.fwd_delay}};
    j["generator"] = {{"preset", s.generator_preset},
                      {"rho", s.rho},
                      {"K", s.gen_K},
                      {"L", s.gen_L},
                      {"delta", s.gen_delta}};
    for (const auto& [theta, w] : s.alpha_atoms)
        j["generator"]["alpha"].push_back({{"theta", theta}, {"w", w}});
    j["terminal"] = {{"preset", s.terminal_preset},
                     {"value", s.terminal_value}};
    j["numerics"] = {{"T", s.T},
                     {"dt", s.dt},
                     {"n_paths", s.n_paths},
                     {"seed", s.seed},
                     {"tol", s.tol},
                     {"max_iter", s.max_iter},
                     {"degree", s.degree},
                     {"threads", s.threads},
                     {"verify_tol", s.verify_tol}};
    j["market"] = {{"r", s.mkt_r},         {"mu", s.mkt_mu},
                   {"sigma", s.mkt_sigma}, {"kappa", s.mkt_kappa},
                   {"delta", s.mkt_delta}, {"s0", s.mkt_s0}};
    j["mode"] = s.mode;
    return j.dump(2) + "\n";
}

namespace detail {

/// 17-significant-digit decimal, enough to round-trip a double.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    void write(const std::string& name, const std::string& content) {
        const auto path = dir_ / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("run: cannot write " + path.string());
        out << content;
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a(content.data(), content.size())));
        digests_.emplace_back(name, buf);
    }

    void write_manifest(const Scenario& s) {
        nlohmann::json m;
        const std::string stext = serialize(s);
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a(stext.data(), stext.size())));
        m["scenario_digest"] = buf;
        m["seed"] = s.seed;
        m["version"] = kVersion;
        for (const auto& [name, digest] : digests_)
            m["outputs"][name] = digest;
        std::ofstream out(dir_ / "manifest.json", std::ios::binary);
        out << m.dump(2) << "\n";
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> digests_;
};

inline std::string paths_csv(const ForwardEnsemble& ens) {
    std::string csv = "path_id,t";
    const std::size_t d = ens.paths.front().dim();
    for (std::size_t c = 1; c <= d; ++c)
        csv += ",x" + std::to_string(c);
    csv += "\n";
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        const CadlagPath& path = ens.paths[p];
        for (std::size_t i = 0; i < path.nodes(); ++i) {
            csv += std::to_string(p) + "," +
                   fmt17(path.t_start() + static_cast<double>(i) * path.dt());
            for (double v : path.node(i)) csv += "," + fmt17(v);
            csv += "\n";
        }
    }
    return csv;
}

inline std::string solution_csv(const BsdeSolution& sol) {
    std::string csv = "path_id,t,y";
    for (std::size_t c = 1; c <= sol.noise_dim; ++c)
        csv += ",z" + std::to_string(c);
    csv += ",u_tilde\n";
    for (std::size_t p = 0; p < sol.n_paths; ++p)
        for (std::size_t i = 0; i < sol.n_nodes; ++i) {
            csv += std::to_string(p) + "," +
                   fmt17(static_cast<double>(i) * sol.dt) + "," +
                   fmt17(sol.y_at(p, i));
            for (double zc : sol.z_at(p, i)) csv += "," + fmt17(zc);
            csv += "," + fmt17(sol.u_tilde_at(p, i)) + "\n";
        }
    return csv;
}

inline std::string picard_csv(const BsdeSolution& sol) {
    std::string csv = "iter,sup_gap\n";
    for (std::size_t i = 0; i < sol.picard_history.size(); ++i)
        csv += std::to_string(i) + "," + fmt17(sol.picard_history[i]) + "\n";
    return csv;
}

}  // namespace detail

/// Certificate report for the scenario's (K, L, delta, T).
inline nlohmann::json certify_report(const Scenario& s) {
    nlohmann::json out;
    const auto chi = best_chi(s.gen_K, s.gen_L, s.gen_delta, s.T);
    out["chi_star"] = chi.chi;
    out["value_star"] = chi.value;
    out["threshold"] = kContractionThreshold;
    out["certified"] = chi.certified;
    const auto app =
        appendix_constants(s.gen_K, s.gen_L, chi.chi, s.gen_delta, s.T);
    out["a"] = app.a;
    out["beta"] = app.beta;
    out["c1"] = app.c1;
    out["gamma_mod"] = app.gamma_mod;
    return out;
}

/// Execute one scenario and write its artifacts (CSVs, summary.json and the
/// digest manifest) into out_dir. Identical scenario + seed produce
/// byte-identical files. Returns the summary object.
inline nlohmann::json run_scenario(const Scenario& s,
                                   const std::filesystem::path& out_dir) {
    s.validate();
    detail::ArtifactWriter writer(out_dir);
    nlohmann::json summary;
    summary["mode"] = s.mode;
    summary["seed"] = s.seed;

    if (s.mode == "certify") {
        const auto cert = certify_report(s);
        writer.write("certificate.json", cert.dump(2) + "\n");
        summary["certificate"] = cert;
    } else if (s.mode == "simulate") {
        const auto phi = CadlagPath::constant(0.0, 0.0, s.dt, s.x0);
        const auto ens =
            simulate_ensemble(s.forward(), s.model(), 0.0, phi, s.T, s.dt,
                              s.n_paths, s.seed, s.threads);
        writer.write("paths.csv", detail::paths_csv(ens));
        summary["n_paths"] = ens.n_paths();
    } else if (s.mode == "solve") {
        const auto phi = CadlagPath::constant(0.0, 0.0, s.dt, s.x0);
        const auto ens =
            simulate_ensemble(s.forward(), s.model(), 0.0, phi, s.T, s.dt,
                              s.n_paths, s.seed, s.threads);
        const auto sol = picard_solve(ens, s.generator(), s.terminal(),
                                      s.gen_delta, s.dt, s.tol, s.max_iter,
                                      s.basis());
        writer.write("solution.csv", detail::solution_csv(sol));
        writer.write("picard.csv", detail::picard_csv(sol));
        double y0 = 0.0;
        for (std::size_t p = 0; p < sol.n_paths; ++p) y0 += sol.y_at(p, 0);
        y0 /= static_cast<double>(sol.n_paths);
        summary["y0_mean"] = y0;
        summary["y0_std_err"] = std::sqrt(sol.mean_fit[0].residual_var /
                                          static_cast<double>(sol.n_paths));
        summary["picard_history"] = sol.picard_history;
    } else if (s.mode == "verify") {
        SolverConfig cfg;
        cfg.coeffs = s.forward();
        cfg.model = s.model();
        cfg.gen = s.generator();
        cfg.term = s.terminal();
        cfg.T = s.T;
        cfg.dt = s.dt;
        cfg.n_paths = s.n_paths;
        cfg.seed = s.seed;
        cfg.tol = s.tol;
        cfg.max_iter = s.max_iter;
        cfg.basis = s.basis();
        cfg.threads = s.threads;
        FunctionalU u(cfg);
        const auto phi = CadlagPath::constant(0.0, s.T, s.dt, s.x0);
        const std::string case_name =
            s.forward_preset + "/" + s.generator_preset + "/" +
            s.terminal_preset;
        std::string csv = "case,t,x,residual,std_err,tolerance,pass\n";
        bool all_pass = true;
        const std::size_t n_steps =
            static_cast<std::size_t>(std::llround(s.T / s.dt));
        for (double frac : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            const std::size_t i = std::max<std::size_t>(
                1, std::min(n_steps - 1,
                            static_cast<std::size_t>(frac * n_steps)));
            const double t = static_cast<double>(i) * s.dt;
            const double x = phi.eval1(t);
            const double bump = 0.05 * (1.0 + std::abs(x));
            const double res = pide_residual(u, t, phi, cfg.coeffs, cfg.model,
                                             cfg.gen, s.dt, bump);
            const double se = u.evaluate(t, phi).std_err;
            const bool pass = std::abs(res) < s.verify_tol;
            all_pass = all_pass && pass;
            csv += case_name + "," + detail::fmt17(t) + "," +
                   detail::fmt17(x) + "," + detail::fmt17(res) + "," +
                   detail::fmt17(se) + "," + detail::fmt17(s.verify_tol) +
                   "," + (pass ? "true" : "false") + "\n";
        }
        writer.write("residuals.csv", csv);
        summary["all_pass"] = all_pass;
    } else if (s.mode == "hedge") {
        const auto mkt = s.market();
        const auto claim = s.terminal();
        ReplicationConfig cfg;
        cfg.T = s.T;
        cfg.dt = s.dt;
        cfg.n_paths = s.n_paths;
        cfg.seed = s.seed;
        cfg.tol = s.tol;
        cfg.max_iter = s.max_iter;
        cfg.basis = s.basis();
        cfg.threads = s.threads;
        const auto res = replicate(mkt, claim, cfg);
        const auto pnl = hedge_pnl(res, mkt, claim, cfg, s.seed + 1);

        std::string pi_csv = "t,pi_mean,pi_std\n";
        const std::size_t n_nodes = res.sigma_at.size();
        for (std::size_t i = 0; i < n_nodes; ++i) {
            double mean = 0.0, ss = 0.0;
            for (const auto& strat : res.strategy) mean += strat[i];
            mean /= static_cast<double>(res.strategy.size());
            for (const auto& strat : res.strategy)
                ss += (strat[i] - mean) * (strat[i] - mean);
            const double sd =
                std::sqrt(ss / static_cast<double>(res.strategy.size()));
            pi_csv += detail::fmt17(static_cast<double>(i) * s.dt) + "," +
                      detail::fmt17(mean) + "," + detail::fmt17(sd) + "\n";
        }
        writer.write("pi_summary.csv", pi_csv);

        std::string pnl_csv = "path_id,error\n";
        for (std::size_t p = 0; p < pnl.errors.size(); ++p)
            pnl_csv += std::to_string(p) + "," +
                       detail::fmt17(pnl.errors[p]) + "\n";
        writer.write("pnl.csv", pnl_csv);

        summary["price"] = res.price_t0;
        summary["price_std_err"] = res.price_std_err;
        summary["certified"] = res.certified;
        summary["warning"] = res.warning;
        summary["pnl_mean"] = pnl.mean;
        summary["pnl_std"] = pnl.std_dev;
    }

    writer.write("summary.json", summary.dump(2) + "\n");
    writer.write_manifest(s);
    return summary;
}

}  // namespace fbsde
