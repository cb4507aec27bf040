#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lgi/config.hpp"
#include "lgi/toy/ap.hpp"
#include "lgi/toy/model.hpp"
#include "lgi/toy/scene.hpp"

namespace lgi::toy {

// Training and evaluation scenes come from disjoint streams of the same seed.
std::uint64_t train_data_seed(std::uint64_t seed);
std::uint64_t eval_data_seed(std::uint64_t seed);

// AdamW with decoupled decay on every parameter:
//   p <- p * (1 - lr * wd); m, v moment updates; p <- p - lr * m_hat / (sqrt(v_hat) + eps).
class AdamW {
public:
    AdamW(const TrainConfig& cfg, const ToyParams& like);
    void step(ToyParams& params, const ToyParams& grads);
    std::int64_t steps() const { return t_; }

private:
    TrainConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::int64_t t_ = 0;
};

struct TrainResult {
    ToyParams params;
    std::vector<double> epoch_loss; // mean batch loss per epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

// Deterministic for a fixed TrainConfig (single-threaded). When a batch loss is
// not finite, the parameters from before that batch are written to
// `failure_path` (if non-empty) and TrainError is thrown.
TrainResult train_toy(const TrainConfig& train, const EncoderConfig& encoder,
                      const std::filesystem::path& failure_path = {}, const EpochCallback& on_epoch = {});

// Batched forward, decode, NMS and AP over `scenes`.
ApResult evaluate_toy(const ToyParams& params, const EncoderConfig& cfg, std::span<const ToyScene> scenes,
                      int batch_size = 8);

// Names of parameters whose gradient is identically zero on every scene of
// one forward/backward pass over `scenes`.
std::vector<std::string> dead_gradients(const ToyParams& params, const EncoderConfig& cfg,
                                        std::span<const ToyScene> scenes);

struct AblationRun {
    std::uint64_t seed = 0;
    std::vector<double> epoch_loss;
    ApResult ap;
};

struct AblationRow {
    bool lse = false;
    bool gii = false;
    std::vector<AblationRun> runs;

    double mean_ap50() const;
    double mean_ap() const;
    // Last-epoch loss below first-epoch loss on every run.
    bool loss_decreased() const;
};

struct AblationOptions {
    TrainConfig train;
    EncoderConfig encoder = toy_encoder_config();
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    int eval_images = 64;
};

using AblationProgress = std::function<void(const AblationRow& row, const AblationRun& run)>;

// Rows in order: baseline, LSE, GII, LSE+GII.
std::vector<AblationRow> run_ablation(const AblationOptions& opts, const AblationProgress& progress = {});

std::string format_ablation(std::span<const AblationRow> rows);

} // namespace lgi::toy
