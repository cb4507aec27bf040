#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "lgi/encoder.hpp"

namespace lgi {

// AdamW (decoupled weight decay) training settings for the toy harness.
struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 8;
    int epochs = 20;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int train_images = 192;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct Config {
    EncoderConfig encoder;
    TrainConfig train;

    bool operator==(const Config&) const = default;
};

std::string to_string(GateActivation g);
// Throws ConfigError for anything but "none" / "sigmoid".
GateActivation gate_from_string(std::string_view s);

// Flat JSON object; every key is optional and unknown keys are rejected.
// Missing keys take their value from `defaults`. Throws ParseError (with
// 1-based line/column) for malformed JSON and ConfigError for bad values.
Config parse_config(std::string_view text, const Config& defaults = {});
Config load_config(const std::filesystem::path& path, const Config& defaults = {});

// Pretty-printed JSON containing every key.
std::string serialize_config(const Config& cfg);

} // namespace lgi
