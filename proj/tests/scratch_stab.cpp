// scratch: Hessian spectrum at a traced prolate critical point
#include <densenematic/equilibria.hpp>

#include <cstdio>

using namespace densenematic;

int main() {
    const auto br = trace_branch(BranchKind::prolate, {0.3});
    const double s = br.records[0].s;
    std::printf("S* = %.12f  dJdS = %.3e\n", s, uniaxial_j(s, 0.3).djds);

    const auto q = uniaxial(s, {1, 0, 0});
    std::printf("full grad norm = %.3e\n", j_grad(q, 0.3).norm());

    const auto tangent = detail::orbit_tangent_basis(q);
    std::printf("tangent dim = %zu\n", tangent.size());

    const auto rep = stability_classify(q, 0.3);
    std::printf("spectrum:");
    for (double mu : rep.spectrum) std::printf(" %.6e", mu);
    std::printf("\nrotational=%d verdict=%s\n", rep.rotational_modes, to_string(rep.stability));
    return 0;
}
