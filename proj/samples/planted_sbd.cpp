// Hide four 2x2 rotation blocks behind a random rotation, then find them again.
#include <cmath>
#include <cstdio>

#include "msp/datagen.hpp"
#include "msp/sbd.hpp"

int main() {
    msp::Rng rng(11);
    const std::size_t k = 4, a = 2 * k;
    msp::Matrix skew(1, a * (a - 1) / 2);
    for (auto& x : skew.data()) x = rng.normal();
    msp::Tape t;
    const msp::Matrix u0 = msp::expm(msp::skew_from_params(t.constant(skew), a)).value();

    std::vector<msp::Matrix> family;
    for (int i = 0; i < 64; ++i) {
        std::vector<double> angles(k);
        for (auto& th : angles) th = rng.uniform(-3.0, 3.0);
        family.push_back(msp::matmul_nt(msp::matmul(u0, msp::latent_rotation(angles)), u0));
    }
    double before = 0.0;
    for (const auto& m : family) before += msp::blockness_loss(m);
    std::printf("mean blockness before: %.4f\n", before / static_cast<double>(family.size()));

    const auto res = msp::fit_sbd(family);
    std::printf("mean blockness after:  %.2e\n", res.loss);
    std::printf("off-block mass:        %.2e\n", msp::off_block_mass(res.v, res.blocks));
    for (const auto& b : res.blocks.blocks) {
        std::printf("block:");
        for (auto i : b) std::printf(" %zu", i);
        std::printf("\n");
    }
}
