#pragma once

#include <filesystem>
#include <optional>

#include "hetreg/data.hpp"
#include "hetreg/model.hpp"

namespace hetreg {

/// Plain-text checkpoint: a config block followed by named arrays in
/// row-major order, every value printed as a C hexfloat so the round trip is
/// bit-exact and endianness-independent. Whitening statistics ride along when
/// provided so saved models can score original-scale data.
void save_checkpoint(const std::filesystem::path& path, const ProbabilisticMlp& model,
                     const WhitenStats* stats = nullptr);

struct LoadedCheckpoint {
    ProbabilisticMlp model;
    std::optional<WhitenStats> stats;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hetreg
