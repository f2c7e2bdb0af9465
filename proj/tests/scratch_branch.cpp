// scratch: 1-D landscape dJ/dS over s for small negative eta
#include <densenematic/equilibria.hpp>

#include <cstdio>

using namespace densenematic;

int main() {
    for (double eta : {-0.05, -0.02}) {
        std::printf("eta = %.3f\n", eta);
        for (double s = 0.0005; s < 0.95; s *= 1.6) {
            try {
                const auto r = uniaxial_j(s, eta);
                std::printf("  s=%8.5f J=%12.8f dJdS=%12.6e l=%10.4f\n", s, r.j, r.djds, r.l);
            } catch (const std::exception& e) {
                std::printf("  s=%8.5f <%s>\n", s, e.what());
            }
        }
        for (double s = 0.1; s < 0.9; s += 0.1) {
            const auto r = uniaxial_j(s, eta);
            std::printf("  s=%8.5f J=%12.8f dJdS=%12.6e\n", s, r.j, r.djds);
        }
    }
    return 0;
}
