#pragma once

#include <string>
#include <vector>

#include "msp/binio.hpp"
#include "msp/model.hpp"

namespace msp {

inline json train_config_to_json(const TrainConfig& c) {
    return json{{"a", c.a},
                {"m", c.m},
                {"hidden", c.hidden},
                {"transition_hidden", c.transition_hidden},
                {"lr", c.lr},
                {"lr_final", c.lr_final},
                {"decay_at", c.decay_at},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"eps", c.eps},
                {"batch", c.batch},
                {"iters", c.iters},
                {"seed", c.seed},
                {"variant", to_string(c.variant)},
                {"order", c.order},
                {"T_c", c.T_c},
                {"T_p", c.T_p},
                {"inv_weight", c.inv_weight},
                {"log_interval", c.log_interval}};
}

/// Strict parse: every field must be present (callers materialize defaults
/// first). Type errors surface as FormatError.
inline TrainConfig train_config_from_json(const json& j) {
    using binio::field;
    TrainConfig c;
    c.a = field<std::size_t>(j, "a");
    c.m = field<std::size_t>(j, "m");
    c.hidden = field<std::vector<std::size_t>>(j, "hidden");
    c.transition_hidden = field<std::vector<std::size_t>>(j, "transition_hidden");
    c.lr = field<double>(j, "lr");
    c.lr_final = field<double>(j, "lr_final");
    c.decay_at = field<std::size_t>(j, "decay_at");
    c.beta1 = field<double>(j, "beta1");
    c.beta2 = field<double>(j, "beta2");
    c.eps = field<double>(j, "eps");
    c.batch = field<std::size_t>(j, "batch");
    c.iters = field<std::size_t>(j, "iters");
    c.seed = field<std::uint64_t>(j, "seed");
    c.variant = variant_from_string(field<std::string>(j, "variant"));
    c.order = field<int>(j, "order");
    c.T_c = field<std::size_t>(j, "T_c");
    c.T_p = field<std::size_t>(j, "T_p");
    c.inv_weight = field<double>(j, "inv_weight");
    c.log_interval = field<std::size_t>(j, "log_interval");
    return c;
}

}  // namespace msp
