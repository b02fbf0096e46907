#pragma once

#include <cstdint>
#include <string>

#include "cclap/errors.hpp"

namespace cclap {

// Flat run configuration. Loaded from a flat JSON object; every key is
// validated against the schema in config.cpp and unknown keys are rejected.
struct RunConfig {
    uint64_t seed = 1234;

    int image_size = 64;
    int latent_channels = 4;
    int latent_spatial = 16;

    int timesteps = 200;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    double lr = 2e-4;
    int batch = 4;

    int ae_epochs = 10;
    double kl_weight = 1e-6;

    int ldm_steps = 2000;

    int style_iters = 2000;
    bool freeze_encoder = false;

    int probe_epochs = 15;

    std::string manifest;  // dataset manifest path
    std::string log_dir;   // JSON-lines training logs land here when set

    void validate() const;
};

RunConfig load_config(const std::string& path);

// "key=value" override, same schema and type checks as the file path.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace cclap
