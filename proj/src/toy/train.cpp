#include "lgi/toy/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "lgi/param_store.hpp"

namespace lgi::toy {

std::uint64_t train_data_seed(std::uint64_t seed)
{
    return Rng(seed).fork("train").next_u64();
}

std::uint64_t eval_data_seed(std::uint64_t seed)
{
    return Rng(seed).fork("eval").next_u64();
}

AdamW::AdamW(const TrainConfig& cfg, const ToyParams& like) : cfg_(cfg)
{
    for_each_param(like, "", [&](const std::string&, const Tensor& t) {
        m_.push_back(zeros_like(t));
        v_.push_back(zeros_like(t));
    });
}

void AdamW::step(ToyParams& params, const ToyParams& grads)
{
    ++t_;
    std::vector<const Tensor*> g;
    for_each_param(grads, "", [&](const std::string&, const Tensor& t) { g.push_back(&t); });
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = cfg_.learning_rate;
    const double decay = 1.0 - lr * cfg_.weight_decay;
    std::size_t k = 0;
    for_each_param(params, "", [&](const std::string&, Tensor& p) {
        const Tensor& gk = *g.at(k);
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double gi = gk[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.adam_eps);
            p[i] = static_cast<float>(p[i] * decay - update);
        }
        ++k;
    });
}

namespace {

std::vector<const ToyScene*> pick(std::span<const ToyScene> scenes, std::span<const std::size_t> idx)
{
    std::vector<const ToyScene*> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        out.push_back(&scenes[i]);
    }
    return out;
}

std::int64_t image_size_of(std::span<const ToyScene> scenes)
{
    if (scenes.empty()) {
        throw ConfigError("toy harness needs at least one scene");
    }
    return scenes.front().image.h();
}

} // namespace

TrainResult train_toy(const TrainConfig& train, const EncoderConfig& encoder, const std::filesystem::path& failure_path,
                      const EpochCallback& on_epoch)
{
    train.validate();
    encoder.validate();
    const std::vector<ToyScene> scenes = gen_dataset(train_data_seed(train.seed), train.train_images);
    const std::int64_t size = image_size_of(scenes);
    TrainResult result{make_toy_params(encoder, Rng(train.seed).fork("init").next_u64()), {}};
    AdamW opt(train, result.params);
    const Rng shuffle_root = Rng(train.seed).fork("shuffle");
    std::vector<std::size_t> order(scenes.size());
    for (int epoch = 0; epoch < train.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double total = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(train.batch_size));
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            const Tensor images = stack_images(scenes, idx);
            const std::vector<const ToyScene*> batch = pick(scenes, idx);
            ToyCache cache;
            const ToyOutput out = toy_model_forward(images, result.params, encoder, &cache);
            const LossResult loss = toy_loss(out.raw, batch, size);
            if (!std::isfinite(loss.loss) || !all_finite(loss.grad)) {
                if (!failure_path.empty()) {
                    ParamStore::from_params(result.params).save(failure_path);
                }
                throw TrainError("loss became non-finite at epoch " + std::to_string(epoch + 1) + ", batch " +
                                 std::to_string(batches + 1));
            }
            const ToyParams grads = toy_model_backward(cache, result.params, encoder, loss.grad);
            opt.step(result.params, grads);
            total += loss.loss;
            ++batches;
        }
        const double mean = total / std::max(1, batches);
        result.epoch_loss.push_back(mean);
        if (on_epoch) {
            on_epoch(epoch + 1, mean);
        }
    }
    return result;
}

ApResult evaluate_toy(const ToyParams& params, const EncoderConfig& cfg, std::span<const ToyScene> scenes,
                      int batch_size)
{
    if (batch_size <= 0) {
        throw ConfigError("batch_size must be positive");
    }
    const std::int64_t size = image_size_of(scenes);
    std::vector<DetectionSet> preds;
    std::vector<std::vector<Truth>> truths;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < scenes.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(scenes.size(), start + static_cast<std::size_t>(batch_size));
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const ToyOutput out = toy_model_forward(stack_images(scenes, idx), params, cfg, nullptr);
        for (const DetectionSet& dense : decode(out.raw, size)) {
            // No score floor: AP ranks the full list, capped at 100 after NMS.
            preds.push_back(postprocess(dense, 0.0));
        }
    }
    for (const ToyScene& s : scenes) {
        truths.push_back(truths_of(s));
    }
    return eval_ap(preds, truths);
}

std::vector<std::string> dead_gradients(const ToyParams& params, const EncoderConfig& cfg,
                                        std::span<const ToyScene> scenes)
{
    const std::int64_t size = image_size_of(scenes);
    std::vector<std::size_t> idx(scenes.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    ToyCache cache;
    const ToyOutput out = toy_model_forward(stack_images(scenes, idx), params, cfg, &cache);
    const LossResult loss = toy_loss(out.raw, pick(scenes, idx), size);
    const ToyParams grads = toy_model_backward(cache, params, cfg, loss.grad);
    std::vector<std::string> dead;
    for_each_param(grads, "", [&](const std::string& name, const Tensor& g) {
        const auto [lo, hi] = min_max(g);
        if (lo == 0.0F && hi == 0.0F) {
            dead.push_back(name);
        }
    });
    return dead;
}

double AblationRow::mean_ap50() const
{
    double s = 0.0;
    for (const AblationRun& r : runs) {
        s += r.ap.ap50;
    }
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

double AblationRow::mean_ap() const
{
    double s = 0.0;
    for (const AblationRun& r : runs) {
        s += r.ap.ap;
    }
    return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

bool AblationRow::loss_decreased() const
{
    return std::all_of(runs.begin(), runs.end(), [](const AblationRun& r) {
        return r.epoch_loss.size() >= 2 && r.epoch_loss.back() < r.epoch_loss.front();
    });
}

std::vector<AblationRow> run_ablation(const AblationOptions& opts, const AblationProgress& progress)
{
    std::vector<AblationRow> rows;
    for (const auto& [lse, gii] : {std::pair{false, false}, {true, false}, {false, true}, {true, true}}) {
        AblationRow row;
        row.lse = lse;
        row.gii = gii;
        EncoderConfig enc = opts.encoder;
        enc.enable_lse = lse;
        enc.enable_gii = gii;
        for (std::uint64_t seed : opts.seeds) {
            TrainConfig tc = opts.train;
            tc.seed = seed;
            TrainResult tr = train_toy(tc, enc);
            const std::vector<ToyScene> eval = gen_dataset(eval_data_seed(seed), opts.eval_images);
            AblationRun run{seed, std::move(tr.epoch_loss), evaluate_toy(tr.params, enc, eval)};
            row.runs.push_back(std::move(run));
            if (progress) {
                progress(row, row.runs.back());
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_ablation(std::span<const AblationRow> rows)
{
    std::string out = "config     mean_AP50  mean_AP   loss_decreased  per-seed AP50\n";
    char buf[128];
    for (const AblationRow& r : rows) {
        const char* name = r.lse ? (r.gii ? "lse+gii" : "lse") : (r.gii ? "gii" : "baseline");
        std::snprintf(buf, sizeof buf, "%-10s %-10.4f %-9.4f %-15s", name, r.mean_ap50(), r.mean_ap(),
                      r.loss_decreased() ? "yes" : "no");
        out += buf;
        for (const AblationRun& run : r.runs) {
            std::snprintf(buf, sizeof buf, " %.4f", run.ap.ap50);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

} // namespace lgi::toy
