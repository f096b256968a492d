#pragma once

#include <string>
#include <vector>

#include "peftser/backbone.hpp"
#include "peftser/head.hpp"
#include "peftser/peft.hpp"

namespace peftser {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int64_t n_coords = 0;
    std::vector<std::pair<std::string, double>> per_kind; // kind name -> max rel err
};

// Central finite differences against tape gradients on one model: every
// trainable tensor is probed at `directions_per_tensor` random coordinates.
// PEFT parameters are randomized first so the zero-initialized branches do
// not make the check vacuous.
double gradcheck_model(const BackboneConfig& backbone_cfg, const HeadConfig& head_cfg,
                       const PeftConfig& peft_cfg, uint64_t seed,
                       int64_t directions_per_tensor = 20, double step = 1e-4);

// The full suite over a 2-layer toy backbone with each PEFT kind plus head.
GradCheckReport gradcheck_suite(uint64_t seed, int64_t directions_per_tensor = 20,
                                double step = 1e-4);

} // namespace peftser
