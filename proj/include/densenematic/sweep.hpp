#pragma once

#include <densenematic/energy.hpp>
#include <densenematic/equilibria.hpp>

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace densenematic {

/// Shortest round-trip decimal representation (fixed across runs, so CSV
/// output is byte-deterministic).
inline std::string format_double(double v) {
    if (v == 0.0) return "0";  // canonical zero (folds -0)
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// --threads wins; otherwise the DENSENEMATIC_THREADS environment variable;
/// otherwise single-threaded.
inline int resolve_thread_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DENSENEMATIC_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

/// Index-parallel loop; results must be written to per-index slots so the
/// output order never depends on scheduling.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
    threads = std::min<std::size_t>(std::max(threads, 1), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                f(i);
            }
        });
    for (auto& th : pool) th.join();
}

inline std::vector<double> make_grid(double lo, double hi, double step) {
    std::vector<double> g;
    const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
    g.reserve(std::max(n, 0));
    for (int i = 0; i < n; ++i) g.push_back(lo + i * step);
    return g;
}

inline void validate_quad(const QuadSpec& spec) {
    if (spec.n_u < 16 || spec.n_phi < 32)
        throw std::domain_error("quadrature resolution below minimum (n_u >= 16, n_phi >= 32)");
}

// ---------------------------------------------------------------------------
// phase diagram
// ---------------------------------------------------------------------------

struct PhaseDiagramConfig {
    double eta_min = -0.3;
    double eta_max = 0.6;
    double eta_step = 0.05;
    std::vector<BranchKind> branches = {BranchKind::isotropic, BranchKind::prolate,
                                        BranchKind::oblate, BranchKind::unstable_near_zero};
    QuadSpec quad{};
    int threads = 1;

    void validate() const {
        if (!(eta_step > 0.0)) throw std::domain_error("eta step must be positive");
        if (!(eta_max < 2.0 / 3.0)) throw std::domain_error("eta_max must be below 2/3");
        if (!(eta_min <= eta_max)) throw std::domain_error("empty eta range");
        validate_quad(quad);
    }
};

/// One CSV row: a located branch point, or a gap row carrying the reason.
struct PhaseRecord {
    double eta = 0.0;
    BranchKind branch = BranchKind::isotropic;
    double s = 0.0, l = 0.0, j = 0.0;
    Stability stability = Stability::degenerate;
    double m2 = 0.0;
    double pstar = 0.0;
    bool gap = false;
    std::string note;
};

inline std::vector<PhaseRecord> run_phase_diagram(const PhaseDiagramConfig& cfg) {
    cfg.validate();
    const auto grid = make_grid(cfg.eta_min, cfg.eta_max, cfg.eta_step);
    const int threads = resolve_thread_count(cfg.threads);

    std::vector<PhaseRecord> rows;
    for (const BranchKind kind : cfg.branches) {
        // contiguous chunks keep the warm starts useful inside each worker
        const std::size_t chunks = std::max<std::size_t>(
            1, std::min<std::size_t>(threads, grid.size()));
        std::vector<Branch> parts(chunks);
        parallel_for(chunks, static_cast<int>(chunks), [&](std::size_t c) {
            const std::size_t lo = grid.size() * c / chunks;
            const std::size_t hi = grid.size() * (c + 1) / chunks;
            parts[c] = trace_branch(
                kind, std::vector<double>(grid.begin() + lo, grid.begin() + hi), cfg.quad.n_u);
        });
        for (const auto& part : parts) {
            for (const auto& rec : part.records) {
                PhaseRecord row;
                row.eta = rec.eta;
                row.branch = kind;
                row.s = rec.s;
                row.l = rec.l;
                row.j = rec.j;
                row.stability = rec.stability;
                row.m2 = rec.m2;
                row.pstar = rec.pstar;
                rows.push_back(std::move(row));
            }
            for (const auto& gap : part.gaps) {
                PhaseRecord row;
                row.eta = gap.eta;
                row.branch = kind;
                row.gap = true;
                row.note = gap.reason;
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

inline void write_phase_csv(std::ostream& os, const std::vector<PhaseRecord>& rows) {
    os << "eta,branch,S,l,J,stability,p2_moment,Pstar,note\n";
    for (const auto& r : rows) {
        os << format_double(r.eta) << ',' << to_string(r.branch) << ',';
        if (r.gap) {
            os << ",,,,,," << r.note << '\n';
            continue;
        }
        os << format_double(r.s) << ',' << format_double(r.l) << ',' << format_double(r.j) << ','
           << to_string(r.stability) << ',' << format_double(r.m2) << ','
           << format_double(r.pstar) << ",\n";
    }
}

/// Static S-vs-eta figure: one polyline per run of consecutive non-gap
/// records with equal stability, coloured by stability class.
inline void write_phase_svg(std::ostream& os, const std::vector<PhaseRecord>& rows) {
    const double w = 820, h = 600, ml = 70, mr = 160, mt = 30, mb = 55;
    double eta_lo = 1e300, eta_hi = -1e300;
    for (const auto& r : rows) {
        eta_lo = std::min(eta_lo, r.eta);
        eta_hi = std::max(eta_hi, r.eta);
    }
    if (!(eta_lo < eta_hi)) {
        eta_lo -= 0.1;
        eta_hi += 0.1;
    }
    const double s_lo = -0.6, s_hi = 1.05;
    auto xm = [&](double eta) { return ml + (eta - eta_lo) / (eta_hi - eta_lo) * (w - ml - mr); };
    auto ym = [&](double s) { return h - mb - (s - s_lo) / (s_hi - s_lo) * (h - mt - mb); };
    auto color = [](Stability st) {
        switch (st) {
            case Stability::minimum: return "#1a9850";
            case Stability::maximum: return "#d73027";
            case Stability::saddle: return "#e08214";
            case Stability::degenerate: return "#777777";
        }
        return "#000000";
    };

    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    os << "  <rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
       << "\" fill=\"white\"/>\n";

    // axes and ticks
    os << "  <line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
       << h - mb << "\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 6; ++i) {
        const double eta = eta_lo + (eta_hi - eta_lo) * i / 6.0;
        os << "  <line x1=\"" << xm(eta) << "\" y1=\"" << h - mb << "\" x2=\"" << xm(eta)
           << "\" y2=\"" << h - mb + 5 << "\" stroke=\"black\"/>\n";
        os << "  <text x=\"" << xm(eta) << "\" y=\"" << h - mb + 20
           << "\" font-size=\"11\" text-anchor=\"middle\">" << format_double(std::round(eta * 1e3) / 1e3)
           << "</text>\n";
    }
    for (double s = -0.5; s <= 1.01; s += 0.25) {
        os << "  <line x1=\"" << ml - 5 << "\" y1=\"" << ym(s) << "\" x2=\"" << ml << "\" y2=\""
           << ym(s) << "\" stroke=\"black\"/>\n";
        os << "  <text x=\"" << ml - 10 << "\" y=\"" << ym(s) + 4
           << "\" font-size=\"11\" text-anchor=\"end\">" << format_double(s) << "</text>\n";
    }
    os << "  <text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
       << "\" font-size=\"13\" text-anchor=\"middle\">eta</text>\n";
    os << "  <text x=\"18\" y=\"" << (mt + h - mb) / 2
       << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << (mt + h - mb) / 2 << ")\">S</text>\n";

    // polylines per branch, split on gaps and stability changes
    for (const BranchKind kind : {BranchKind::isotropic, BranchKind::prolate, BranchKind::oblate,
                                  BranchKind::unstable_near_zero}) {
        // the unstable family carries two signs; split by sign as well
        for (const int sign : {-1, 0, 1}) {
            std::vector<const PhaseRecord*> pts;
            for (const auto& r : rows) {
                if (r.branch != kind || r.gap) continue;
                if (kind == BranchKind::unstable_near_zero) {
                    if (sign == 0 || (sign < 0) != (r.s < 0)) continue;
                } else if (sign != 0) {
                    continue;
                }
                pts.push_back(&r);
            }
            std::size_t i = 0;
            while (i < pts.size()) {
                std::size_t jn = i + 1;
                while (jn < pts.size() && pts[jn]->stability == pts[i]->stability) ++jn;
                os << "  <polyline fill=\"none\" stroke=\"" << color(pts[i]->stability)
                   << "\" stroke-width=\"2\" points=\"";
                for (std::size_t k = i; k < jn; ++k)
                    os << xm(pts[k]->eta) << ',' << ym(pts[k]->s) << ' ';
                os << "\"/>\n";
                i = jn;
            }
        }
    }

    // legend
    const std::array<std::pair<Stability, const char*>, 4> legend = {{
        {Stability::minimum, "local min"},
        {Stability::maximum, "local max"},
        {Stability::saddle, "saddle"},
        {Stability::degenerate, "degenerate"},
    }};
    for (std::size_t i = 0; i < legend.size(); ++i) {
        const double y = mt + 20 + 22.0 * i;
        os << "  <line x1=\"" << w - mr + 15 << "\" y1=\"" << y << "\" x2=\"" << w - mr + 45
           << "\" y2=\"" << y << "\" stroke=\"" << color(legend[i].first)
           << "\" stroke-width=\"3\"/>\n";
        os << "  <text x=\"" << w - mr + 52 << "\" y=\"" << y + 4 << "\" font-size=\"12\">"
           << legend[i].second << "</text>\n";
    }
    os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// equation of state
// ---------------------------------------------------------------------------

struct EosConfig {
    MaterialParams params{2.0, 1.0, 0.3, 1.0, 1.0, 1.0};
    double rho_min = 0.1;
    double rho_max = 0.9;
    double rho_step = 0.05;
    std::string branch = "auto";  // auto | isotropic | prolate | oblate
    QuadSpec quad{};
    int threads = 1;

    void validate() const {
        if (!(rho_step > 0.0)) throw std::domain_error("rho step must be positive");
        if (!(rho_min > 0.0)) throw std::domain_error("rho_min must be positive");
        if (!(rho_min <= rho_max)) throw std::domain_error("empty rho range");
        if (branch != "auto" && branch != "isotropic" && branch != "prolate" &&
            branch != "oblate")
            throw std::domain_error("unknown eos branch selector");
        validate_quad(quad);
    }
};

struct EosRecord {
    double rho = 0.0;
    double eta = 0.0;
    std::string branch;
    double s = 0.0;
    double pstar = 0.0;
    double p = 0.0;
    double bound_q = 0.0;    // 1/(|Q|^2 - eta)
    double bound_sat = 0.0;  // 1/(2/3 - eta)
    bool gap = false;
    std::string note;
};

namespace detail {

// least-energy uniaxial state at this eta among the requested candidates
struct EosState {
    std::string branch;
    double s = 0.0;
    std::optional<UniaxialResult> res;  // empty for the isotropic state
};

inline std::optional<EosState> eos_pick_state(double eta, const std::string& which, int n_u) {
    std::vector<EosState> cands;
    if ((which == "auto" || which == "isotropic") && eta < 0.0)
        cands.push_back({"isotropic", 0.0, uniaxial_j(0.0, eta, n_u)});
    if (which == "auto" || which == "prolate") {
        const double lo = eta > 0 ? std::sqrt(1.5 * eta) + 1e-3 : 1e-3;
        const auto hit = scan_for_root(lo, 1.0 - 1e-3, 96, true, eta, n_u);
        if (hit.found) cands.push_back({"prolate", hit.s, uniaxial_j(hit.s, eta, n_u)});
    }
    if ((which == "auto" || which == "oblate") && eta < 1.0 / 6.0) {
        const double hi = eta > 0 ? -std::sqrt(1.5 * eta) - 1e-3 : -1e-3;
        const auto hit = scan_for_root(-0.5 + 1e-3, hi, 96, true, eta, n_u);
        if (hit.found) cands.push_back({"oblate", hit.s, uniaxial_j(hit.s, eta, n_u)});
    }
    if (cands.empty()) return std::nullopt;
    const EosState* best = &cands[0];
    for (const auto& c : cands)
        if (c.res->j < best->res->j) best = &c;
    return *best;
}

}  // namespace detail

inline std::vector<EosRecord> run_eos(const EosConfig& cfg) {
    cfg.validate();
    const auto grid = make_grid(cfg.rho_min, cfg.rho_max, cfg.rho_step);
    std::vector<EosRecord> rows(grid.size());
    parallel_for(grid.size(), resolve_thread_count(cfg.threads), [&](std::size_t i) {
        EosRecord& row = rows[i];
        row.rho = grid[i];
        if (row.rho >= cfg.params.rho_saturation()) {
            row.gap = true;
            row.note = "saturation: rho >= rho_s";
            return;
        }
        row.eta = cfg.params.eta_of_rho(row.rho);
        if (!(row.eta < 2.0 / 3.0)) {
            row.gap = true;
            row.note = "eta(rho) >= 2/3";
            return;
        }
        const auto state = detail::eos_pick_state(row.eta, cfg.branch, cfg.quad.n_u);
        if (!state) {
            row.gap = true;
            row.note = "no admissible state for branch selector";
            return;
        }
        row.branch = state->branch;
        row.s = state->s;
        row.pstar = state->res->pstar;
        row.p = 3.0 * cfg.params.k_bt / (2.0 * row.rho * cfg.params.d) * row.pstar;
        const double q2 = (2.0 / 3.0) * state->s * state->s;
        row.bound_q = 1.0 / (q2 - row.eta);
        row.bound_sat = 1.0 / (2.0 / 3.0 - row.eta);
    });
    return rows;
}

inline void write_eos_csv(std::ostream& os, const std::vector<EosRecord>& rows) {
    os << "rho,eta,branch,S,Pstar,P,bound_Q,bound_saturation,note\n";
    for (const auto& r : rows) {
        os << format_double(r.rho) << ',';
        if (r.gap) {
            os << ",,,,,,," << r.note << '\n';
            continue;
        }
        os << format_double(r.eta) << ',' << r.branch << ',' << format_double(r.s) << ','
           << format_double(r.pstar) << ',' << format_double(r.p) << ','
           << format_double(r.bound_q) << ',' << format_double(r.bound_sat) << ",\n";
    }
}

// ---------------------------------------------------------------------------
// stability map
// ---------------------------------------------------------------------------

struct StabilityMapConfig {
    double eta_min = -0.5;
    double eta_max = -0.05;
    double eta_step = 0.05;
    double tau_min = 0.1;
    double tau_max = 30.0;
    double tau_step = 1.0;
    QuadSpec quad{};
    int threads = 1;

    void validate() const {
        if (!(eta_step > 0.0) || !(tau_step > 0.0)) throw std::domain_error("steps must be positive");
        if (!(eta_max < 0.0)) throw std::domain_error("stability map requires eta < 0");
        if (!(tau_min > 0.0)) throw std::domain_error("tau must be positive");
        if (!(eta_min <= eta_max) || !(tau_min <= tau_max))
            throw std::domain_error("empty grid");
        validate_quad(quad);
    }
};

struct StabilityMapRecord {
    double eta = 0.0;
    double tau = 0.0;
    std::string flag;  // stable | unstable | marginal
    double tau_c = 0.0;
};

inline std::vector<StabilityMapRecord> run_stability_map(const StabilityMapConfig& cfg) {
    cfg.validate();
    const auto etas = make_grid(cfg.eta_min, cfg.eta_max, cfg.eta_step);
    const auto taus = make_grid(cfg.tau_min, cfg.tau_max, cfg.tau_step);
    std::vector<std::vector<StabilityMapRecord>> per_eta(etas.size());
    parallel_for(etas.size(), resolve_thread_count(cfg.threads), [&](std::size_t i) {
        const double eta = etas[i];
        // the J_tau Hessian at 0 is the J Hessian shifted by -Id/tau, so one
        // finite-difference Hessian per eta serves the whole tau column
        const auto h = hessian_at_zero(eta, cfg.quad);
        const double min_eig = sym_eigen<5>(h.matrix).values[0];
        auto& col = per_eta[i];
        col.reserve(taus.size());
        for (const double tau : taus) {
            StabilityMapRecord rec;
            rec.eta = eta;
            rec.tau = tau;
            rec.tau_c = tau_critical(eta);
            const double shifted = min_eig - 1.0 / tau;
            rec.flag = shifted > 1e-6 ? "stable" : (shifted < -1e-6 ? "unstable" : "marginal");
            col.push_back(std::move(rec));
        }
    });
    std::vector<StabilityMapRecord> rows;
    rows.reserve(etas.size() * taus.size());
    for (auto& col : per_eta)
        for (auto& rec : col) rows.push_back(std::move(rec));
    return rows;
}

inline void write_stability_csv(std::ostream& os, const std::vector<StabilityMapRecord>& rows) {
    os << "eta,tau,isotropic_stability,tau_c\n";
    for (const auto& r : rows)
        os << format_double(r.eta) << ',' << format_double(r.tau) << ',' << r.flag << ','
           << format_double(r.tau_c) << '\n';
}

// ---------------------------------------------------------------------------
// quick invariant suite (the `check` subcommand)
// ---------------------------------------------------------------------------

inline int run_check(std::ostream& os, QuadSpec spec = {}) {
    int failures = 0;
    auto report = [&](const char* name, bool ok, double value) {
        os << (ok ? "[PASS] " : "[FAIL] ") << name << " (" << format_double(value) << ")\n";
        if (!ok) ++failures;
    };

    {
        double worst = 0.0;
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int k = 0; k < 5; ++k) {
            const TracelessSym3 a({u(rng), u(rng), u(rng), u(rng), u(rng)});
            worst = std::max(worst, (fourth_moment_map(a, spec) - (2.0 / 15.0) * a).norm());
        }
        report("fourth-moment identity M(A) = (2/15) A", worst <= 1e-10, worst);
    }
    {
        const SphereRule rule(spec);
        double sw = 0.0;
        for (std::size_t i = 0; i < rule.size(); ++i) sw += rule.weight(i);
        report("sphere rule integrates 1 to 4*pi", std::abs(sw - kFourPi) <= 1e-12,
               sw - kFourPi);
    }
    {
        const double target = std::log(15.0 / (8.0 * std::numbers::pi));
        const auto r = uniaxial_j(0.03, -2.0 / 15.0, spec.n_u);
        const bool ok = std::abs(r.j - target) <= 1e-8 && std::abs(r.l) <= 1e-9;
        report("flat family at eta = -2/15", ok, r.j - target);
    }
    {
        const TracelessSym3 q({0.12, -0.05, 0.08, 0.02, -0.1});
        const TracelessSym3 lam({0.3, 0.1, -0.2, 0.05, 0.15});
        const double eta = -0.2;
        const SupportRule rule(q, eta, spec);
        const auto g = dual_grad(rule, q, lam);
        double worst = 0.0;
        for (int i = 0; i < 5; ++i) {
            auto cp = lam.coords(), cm = lam.coords();
            cp[i] += 1e-5;
            cm[i] -= 1e-5;
            const double fd = (dual_objective(rule, q, TracelessSym3(cp)) -
                               dual_objective(rule, q, TracelessSym3(cm))) /
                              2e-5;
            worst = std::max(worst, std::abs(fd - g.coords()[i]));
        }
        report("dual gradient matches finite differences", worst <= 1e-6, worst);
    }
    {
        const double d = j_deta(TracelessSym3{}, -0.5, spec);
        report("isotropic pressure P*(0, -1/2) = 2", std::abs(d - 2.0) <= 1e-10, d);
    }
    {
        std::mt19937 rng(11);
        std::uniform_real_distribution<double> u(-0.15, 0.15);
        double margin = 1e300;
        bool all_in = true;
        for (int k = 0; k < 5; ++k) {
            const TracelessSym3 q({u(rng), u(rng), u(rng), u(rng), u(rng)});
            const double eta = -0.3;
            if (!in_domain_of_j(q, eta)) continue;
            const double p = pressure_dimensionless(q, eta, spec);
            const double b1 = 1.0 / (q.norm() * q.norm() - eta);
            const double b2 = 1.0 / (2.0 / 3.0 - eta);
            margin = std::min({margin, p - b1, b1 - b2});
            all_in = all_in && p >= b1 - 1e-9 && b1 >= b2 - 1e-12;
        }
        report("pressure bounds P* >= 1/(|Q|^2-eta) >= 1/(2/3-eta)", all_in, margin);
    }
    {
        const TracelessSym3 q({0.1, 0.07, -0.06, 0.12, 0.03});
        const double j0 = j_value(q, -0.25, spec);
        double worst = 0.0;
        std::mt19937 rng(13);
        std::normal_distribution<double> g(0.0, 1.0);
        for (int k = 0; k < 3; ++k) {
            double a0 = g(rng), a1 = g(rng), a2 = g(rng), a3 = g(rng);
            const double n = std::sqrt(a0 * a0 + a1 * a1 + a2 * a2 + a3 * a3);
            a0 /= n; a1 /= n; a2 /= n; a3 /= n;
            Mat3 r;
            r[0] = {1 - 2 * (a2 * a2 + a3 * a3), 2 * (a1 * a2 - a0 * a3), 2 * (a1 * a3 + a0 * a2)};
            r[1] = {2 * (a1 * a2 + a0 * a3), 1 - 2 * (a1 * a1 + a3 * a3), 2 * (a2 * a3 - a0 * a1)};
            r[2] = {2 * (a1 * a3 - a0 * a2), 2 * (a2 * a3 + a0 * a1), 1 - 2 * (a1 * a1 + a2 * a2)};
            worst = std::max(worst, std::abs(j_value(rotated(q, r), -0.25, spec) - j0));
        }
        report("frame indifference of J", worst <= 1e-9, worst);
    }
    {
        const TracelessSym3 q({0.15, -0.1, 0.05, 0.08, -0.04});
        const double eta = -0.15;
        const double lhs = j_value(q, eta, spec);
        const double rhs = singular_potential(q, spec) - std::log(q.norm() * q.norm() - eta);
        report("entropy lower bound J >= psi_s - ln(|Q|^2 - eta)", lhs >= rhs - 1e-9, lhs - rhs);
    }
    return failures;
}

}  // namespace densenematic
