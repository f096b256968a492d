#pragma once

#include <string>
#include <vector>

namespace peftser::cli {

struct CountRow {
    std::string architecture; // display name
    std::string preset;
    int64_t downstream = 0; // trainable head
    int64_t adapter = 0;    // e = 128
    int64_t prompt = 0;     // l = 5
    int64_t lora = 0;       // r = 8, first feed-forward projection
};

// The five published geometries with the default PEFT sizings.
std::vector<CountRow> count_params_table();

// "x.xx M" rounding used when comparing against the reference table.
std::string format_millions(int64_t count);

// Entry point behind the peft-ser binary. Exit codes: 0 success, 1 usage or
// config error, 2 data error, 3 numeric failure.
int run(int argc, const char* const* argv);

} // namespace peftser::cli
