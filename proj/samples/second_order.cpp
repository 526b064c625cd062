// Recover a constant angular acceleration from four latent frames.
#include <cstdio>
#include <numbers>

#include "msp/transition.hpp"

int main() {
    const double alpha = std::numbers::pi / 40;
    double theta = 0.3, vel = 0.2;
    const msp::Matrix h0{{1.0, 0.2, -0.5}, {0.0, 1.0, 0.7}};
    msp::Tape t;
    std::vector<msp::Var> latents;
    for (int s = 0; s < 4; ++s) {
        const msp::Matrix r{{std::cos(theta), -std::sin(theta)}, {std::sin(theta), std::cos(theta)}};
        latents.push_back(t.constant(msp::matmul(r, h0)));
        theta += vel;
        vel += alpha;
    }
    const auto est = msp::estimate_second_order(latents);
    const msp::Matrix m = est.m_star.value();
    std::printf("2M* = [[% .6f % .6f] [% .6f % .6f]]\n", m(0, 0), m(0, 1), m(1, 0), m(1, 1));
    std::printf("recovered angle %.6f, true %.6f\n", std::atan2(m(1, 0), m(0, 0)), alpha);
    const auto next = msp::rollout_second_order(est, latents.back(), 1);
    std::printf("predicted next frame norm %.6f\n", msp::frobenius(next.front().value()));
}
