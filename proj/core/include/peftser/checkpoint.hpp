#pragma once

#include <filesystem>
#include <optional>

#include "peftser/backbone.hpp"
#include "peftser/head.hpp"
#include "peftser/peft.hpp"

namespace peftser {

struct Checkpoint {
    Backbone backbone;
    std::optional<PeftState> peft;
    HeadState head;
};

// Directory layout: backbone.json / peft.json / head.json manifests plus one
// tensor file per parameter under backbone/, peft/, head/.
void save_checkpoint(const std::filesystem::path& dir, const Backbone& backbone,
                     const PeftState* peft, const HeadState& head);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace peftser
