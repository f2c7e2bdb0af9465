// Command-line front end: single solves, phase-diagram / equation-of-state /
// stability-map sweeps with CSV (and SVG) emission, and a quick invariant
// check. Exit codes: 0 success, 1 numerical failure, 2 invalid input or
// domain violation.

#include <densenematic/sweep.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace densenematic;

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open output file: " + path);
    return os;
}

void print_tensor(std::ostream& os, const char* name, const TracelessSym3& t) {
    const Mat3 m = t.matrix();
    os << name << ":\n";
    for (int i = 0; i < 3; ++i) {
        os << "  [";
        for (int j = 0; j < 3; ++j) os << (j ? " " : "") << format_double(m[i][j]);
        os << "]\n";
    }
}

struct SolveArgs {
    std::optional<double> s;
    std::optional<double> q1, q2;
    double eta = 0.0;
    std::optional<double> tau;
    QuadSpec quad{};
    double tol = 1e-10;
};

int cmd_solve(const SolveArgs& args) {
    validate_quad(args.quad);
    TracelessSym3 q;
    if (args.s) {
        q = uniaxial(*args.s, {1, 0, 0});
    } else if (args.q1 && args.q2) {
        Mat3 m{};
        m[0][0] = *args.q1;
        m[1][1] = *args.q2;
        m[2][2] = -*args.q1 - *args.q2;
        q = TracelessSym3::from_matrix(m);
    } else {
        std::cerr << "solve: provide either --S or both --q1 and --q2\n";
        return 2;
    }

    if (!in_domain_of_j(q, args.eta)) {
        const double n2 = q.norm() * q.norm();
        if (!(n2 > args.eta))
            std::cerr << "domain violation: |Q|^2 <= eta\n";
        else
            std::cerr << "domain violation: v_min(Q) <= -1/3\n";
        return 2;
    }

    const MacroContext ctx(q, args.eta, args.quad);
    const auto& st = ctx.state();
    const auto res = el_residual(st, args.tau, args.quad);
    const auto rep = stability_classify(q, args.eta, args.tau, args.quad);

    std::cout << "eta: " << format_double(args.eta) << "\n";
    if (args.tau) std::cout << "tau: " << format_double(*args.tau) << "\n";
    print_tensor(std::cout, "Q", q);
    print_tensor(std::cout, "Lambda", st.lambda);
    std::cout << "Z: " << format_double(st.z) << "\n";
    std::cout << "log Z: " << format_double(st.log_z) << "\n";
    double j = ctx.value();
    std::cout << "J: " << format_double(j) << "\n";
    if (args.tau) {
        j -= q.norm() * q.norm() / (2.0 * *args.tau);
        std::cout << "J_tau: " << format_double(j) << "\n";
    }
    std::cout << "dual grad norm: " << format_double(st.grad_norm) << "\n";
    std::cout << "dual iterations: " << st.iterations << "\n";
    TracelessSym3 g = ctx.grad();
    if (args.tau) g -= (1.0 / *args.tau) * q;
    std::cout << "dJ/dQ norm: " << format_double(g.norm()) << "\n";
    std::cout << "EL residuals: density=" << format_double(res.density_defect)
              << " Q-moment=" << format_double(res.q_moment_defect)
              << " Lambda-moment=" << format_double(res.lambda_moment_defect) << "\n";
    std::cout << "stability: " << to_string(rep.stability) << " (spectrum";
    for (double mu : rep.spectrum) std::cout << ' ' << format_double(mu);
    std::cout << ")\n";
    std::cout << "P*: " << format_double(ctx.deta()) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dense nematic equilibrium solver"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file; command-line flags win");

    // ---- solve ----
    SolveArgs sa;
    auto* solve = app.add_subcommand("solve", "solve the dual problem at one (Q, eta)");
    solve->add_option("--S", sa.s, "uniaxial order parameter (axis e1)");
    solve->add_option("--q1", sa.q1, "first diagonal coordinate of Q");
    solve->add_option("--q2", sa.q2, "second diagonal coordinate of Q");
    solve->add_option("--eta", sa.eta, "packing parameter")->required();
    solve->add_option("--tau", sa.tau, "dimensionless temperature (thermal model)");
    solve->add_option("--nu", sa.quad.n_u, "polar Gauss-Legendre count per panel");
    solve->add_option("--nphi", sa.quad.n_phi, "azimuthal count");
    solve->add_option("--tol", sa.tol, "dual gradient tolerance");

    // ---- phase-diagram ----
    PhaseDiagramConfig pd;
    std::string pd_out = "phase_diagram.csv", pd_svg;
    std::vector<std::string> pd_branches;
    auto* phase = app.add_subcommand("phase-diagram", "trace uniaxial branches over an eta grid");
    phase->add_option("--eta-min", pd.eta_min, "grid start");
    phase->add_option("--eta-max", pd.eta_max, "grid end (< 2/3)");
    phase->add_option("--eta-step", pd.eta_step, "grid step");
    phase->add_option("--branches", pd_branches,
                      "subset of {isotropic,prolate,oblate,unstable_near_zero}");
    phase->add_option("--nu", pd.quad.n_u, "polar Gauss-Legendre count per panel");
    phase->add_option("--nphi", pd.quad.n_phi, "azimuthal count");
    phase->add_option("--threads", pd.threads, "worker count (0: DENSENEMATIC_THREADS or 1)");
    phase->add_option("--out", pd_out, "CSV path");
    phase->add_option("--svg", pd_svg, "optional SVG path");

    // ---- eos ----
    EosConfig eos;
    std::string eos_out = "eos.csv";
    double mp_c = 2.0, mp_d = 1.0, mp_a = 0.3, mp_b = 1.0, mp_u = 1.0, mp_kbt = 1.0;
    auto* eoscmd = app.add_subcommand("eos", "equation-of-state table over a density grid");
    eoscmd->add_option("--c", mp_c, "excluded-volume constant");
    eoscmd->add_option("--d", mp_d, "shape-anisotropy constant");
    eoscmd->add_option("--a", mp_a, "attraction offset");
    eoscmd->add_option("--b", mp_b, "attraction strength");
    eoscmd->add_option("--U", mp_u, "interaction scale");
    eoscmd->add_option("--kBT", mp_kbt, "thermal energy");
    eoscmd->add_option("--rho-min", eos.rho_min, "density grid start");
    eoscmd->add_option("--rho-max", eos.rho_max, "density grid end");
    eoscmd->add_option("--rho-step", eos.rho_step, "density grid step");
    eoscmd->add_option("--branch", eos.branch, "auto|isotropic|prolate|oblate");
    eoscmd->add_option("--nu", eos.quad.n_u, "polar Gauss-Legendre count per panel");
    eoscmd->add_option("--nphi", eos.quad.n_phi, "azimuthal count");
    eoscmd->add_option("--threads", eos.threads, "worker count");
    eoscmd->add_option("--out", eos_out, "CSV path");

    // ---- stability-map ----
    StabilityMapConfig sm;
    std::string sm_out = "stability_map.csv";
    auto* smap = app.add_subcommand("stability-map",
                                    "isotropic stability flags over an (eta, tau) grid");
    smap->add_option("--eta-min", sm.eta_min, "grid start (< 0)");
    smap->add_option("--eta-max", sm.eta_max, "grid end (< 0)");
    smap->add_option("--eta-step", sm.eta_step, "grid step");
    smap->add_option("--tau-min", sm.tau_min, "tau grid start (> 0)");
    smap->add_option("--tau-max", sm.tau_max, "tau grid end");
    smap->add_option("--tau-step", sm.tau_step, "tau grid step");
    smap->add_option("--nu", sm.quad.n_u, "polar Gauss-Legendre count per panel");
    smap->add_option("--nphi", sm.quad.n_phi, "azimuthal count");
    smap->add_option("--threads", sm.threads, "worker count");
    smap->add_option("--out", sm_out, "CSV path");

    // ---- check ----
    QuadSpec check_quad;
    auto* check = app.add_subcommand("check", "run the quick invariant suite");
    check->add_option("--nu", check_quad.n_u, "polar Gauss-Legendre count per panel");
    check->add_option("--nphi", check_quad.n_phi, "azimuthal count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (solve->parsed()) return cmd_solve(sa);
        if (phase->parsed()) {
            if (!pd_branches.empty()) {
                pd.branches.clear();
                for (const auto& name : pd_branches) {
                    if (name == "isotropic") pd.branches.push_back(BranchKind::isotropic);
                    else if (name == "prolate") pd.branches.push_back(BranchKind::prolate);
                    else if (name == "oblate") pd.branches.push_back(BranchKind::oblate);
                    else if (name == "unstable_near_zero")
                        pd.branches.push_back(BranchKind::unstable_near_zero);
                    else throw std::domain_error("unknown branch name: " + name);
                }
            }
            const auto rows = run_phase_diagram(pd);
            auto os = open_out(pd_out);
            write_phase_csv(os, rows);
            if (!pd_svg.empty()) {
                auto svg = open_out(pd_svg);
                write_phase_svg(svg, rows);
            }
            std::cout << "wrote " << rows.size() << " rows to " << pd_out << "\n";
            return 0;
        }
        if (eoscmd->parsed()) {
            eos.params = MaterialParams(mp_c, mp_d, mp_a, mp_b, mp_u, mp_kbt);
            const auto rows = run_eos(eos);
            auto os = open_out(eos_out);
            write_eos_csv(os, rows);
            std::cout << "wrote " << rows.size() << " rows to " << eos_out << "\n";
            return 0;
        }
        if (smap->parsed()) {
            const auto rows = run_stability_map(sm);
            auto os = open_out(sm_out);
            write_stability_csv(os, rows);
            std::cout << "wrote " << rows.size() << " rows to " << sm_out << "\n";
            return 0;
        }
        if (check->parsed()) {
            const int failures = run_check(std::cout, check_quad);
            std::cout << (failures == 0 ? "all checks passed\n" : "checks failed\n");
            return failures == 0 ? 0 : 1;
        }
    } catch (const SaturationError& e) {
        std::cerr << "saturation limit: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "domain violation: " << e.what() << "\n";
        return 2;
    } catch (const SolveFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
