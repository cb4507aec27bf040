#include "lgi/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "lgi/bench.hpp"
#include "lgi/config.hpp"
#include "lgi/gradcheck.hpp"
#include "lgi/param_store.hpp"
#include "lgi/tensor_io.hpp"
#include "lgi/toy/train.hpp"

namespace lgi {

namespace {

using nlohmann::json;

Config load_or(const std::string& path, const Config& defaults)
{
    return path.empty() ? defaults : load_config(path, defaults);
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

json ap_json(const toy::ApResult& ap)
{
    return {{"ap", ap.ap}, {"ap50", ap.ap50}, {"per_threshold", ap.per_threshold}};
}

json box_json(const toy::Box& b)
{
    return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

// ---- gradcheck ------------------------------------------------------------------

struct GradcheckArgs {
    std::uint64_t seed = 0;
    double tol = 1e-5;
    bool json_out = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out)
{
    GradcheckOptions opts;
    opts.seed = a.seed;
    opts.tolerance = a.tol;
    opts.primitive_tolerance = a.tol / 10.0;
    const std::vector<GradReport> reports = check_all(opts);
    const bool ok = all_passed(reports);
    if (a.json_out) {
        out << reports_to_json(reports) << '\n';
    } else {
        for (const GradReport& r : reports) {
            out << format_report(r) << '\n';
        }
        out << (ok ? "gradcheck: all passed" : "gradcheck: FAILED") << '\n';
    }
    return ok ? kExitOk : kExitFailed;
}

// ---- bench ----------------------------------------------------------------------

struct BenchArgs {
    std::string config;
    std::int64_t resolution = 640;
    bool json_out = false;
    bool check = false;
    bool time = false;
    int reps = 30;
    std::vector<std::int64_t> time_shape{1, 64, 32, 32};
};

int cmd_bench(const BenchArgs& a, std::ostream& out)
{
    const Config cfg = load_or(a.config, Config{});
    CostReport report = cost_report(cfg.encoder, a.resolution);
    if (a.time) {
        if (a.time_shape.size() != 4) {
            throw ConfigError("--time-shape takes n,c,h,w");
        }
        const Shape s{a.time_shape[0], a.time_shape[1], a.time_shape[2], a.time_shape[3]};
        for (const std::string& op : timed_ops()) {
            report.timings.push_back(time_op(op, s, a.reps));
        }
    }
    if (a.json_out) {
        out << cost_report_to_json(report) << '\n';
    } else {
        out << format_cost_report(report);
    }
    return a.check && !report.deltas_ok() ? kExitFailed : kExitOk;
}

// ---- shared toy helpers -----------------------------------------------------------

struct LoadedModel {
    EncoderConfig cfg;
    toy::ToyParams params;
};

// Flags given on the command line override the checkpoint layout; enabling a
// module the checkpoint lacks is an error, disabling one drops its weights.
LoadedModel load_model(const std::string& weights, const std::string& config, const std::string& flags)
{
    const ParamStore store = ParamStore::load(weights);
    const Config base = load_or(config, toy::toy_default_config());
    EncoderConfig cfg = toy::infer_toy_config(store, config.empty() ? nullptr : &base.encoder);
    if (config.empty()) {
        cfg.gate_activation = base.encoder.gate_activation;
    }
    if (flags.empty()) {
        return {cfg, toy::toy_params_from_store(store, cfg)};
    }
    EncoderConfig want = cfg;
    want.enable_lse = false;
    want.enable_gii = false;
    std::stringstream ss(flags);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "lse") {
            want.enable_lse = true;
        } else if (item == "gii") {
            want.enable_gii = true;
        } else if (item != "none" && !item.empty()) {
            throw ConfigError("--flags accepts lse, gii or none, got \"" + item + "\"");
        }
    }
    if (want.enable_lse && !cfg.enable_lse) {
        throw ConfigError("--flags requests lse but the checkpoint has no LSE weights");
    }
    if (want.enable_gii && !cfg.enable_gii) {
        throw ConfigError("--flags requests gii but the checkpoint has no GII weights");
    }
    want.gii_to_mid = want.enable_gii && cfg.gii_to_mid;
    toy::ToyParams params = toy::make_toy_params(want, 0);
    store.load_into(params);
    return {want, std::move(params)};
}

// ---- run --------------------------------------------------------------------------

struct RunArgs {
    std::string weights;
    std::string input;
    std::string heatmap;
    std::string flags;
    std::string config;
    bool json_out = false;
};

// Mean absolute activation over channels of the finest encoder output level
// for image 0, min-max normalized to 0..255.
void write_heatmap(const std::string& path, const Tensor& level)
{
    const std::int64_t h = level.h();
    const std::int64_t w = level.w();
    std::vector<double> m(static_cast<std::size_t>(h * w), 0.0);
    for (std::int64_t c = 0; c < level.c(); ++c) {
        const float* src = level.plane(0, c);
        for (std::int64_t i = 0; i < h * w; ++i) {
            m[static_cast<std::size_t>(i)] += std::abs(static_cast<double>(src[i]));
        }
    }
    const auto [lo_it, hi_it] = std::minmax_element(m.begin(), m.end());
    const double lo = *lo_it;
    const double span = *hi_it - lo;
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw FormatError("cannot open " + path + " for writing");
    }
    os << "P5\n" << w << ' ' << h << "\n255\n";
    for (double v : m) {
        const auto byte = static_cast<unsigned char>(std::lround(span > 0.0 ? 255.0 * (v - lo) / span : 0.0));
        os.put(static_cast<char>(byte));
    }
    if (!os) {
        throw FormatError("failed writing " + path);
    }
}

int cmd_run(const RunArgs& a, std::ostream& out)
{
    const LoadedModel m = load_model(a.weights, a.config, a.flags);
    const Tensor image = load_tensor_as<float>(a.input);
    const toy::ToyOutput o = toy::toy_model_forward(image, m.params, m.cfg, nullptr);
    const std::vector<toy::DetectionSet> dense = toy::decode(o.raw, image.h());
    if (!a.heatmap.empty()) {
        write_heatmap(a.heatmap, o.levels.s3);
    }
    json images = json::array();
    for (std::size_t n = 0; n < dense.size(); ++n) {
        const toy::DetectionSet dets = toy::postprocess(dense[n]);
        json list = json::array();
        for (const toy::Detection& d : dets) {
            list.push_back({{"class", toy::class_name(static_cast<toy::ShapeClass>(d.cls))},
                            {"score", d.score},
                            {"box", box_json(d.box)}});
            if (!a.json_out) {
                out << "image " << n << ' ' << toy::class_name(static_cast<toy::ShapeClass>(d.cls)) << ' '
                    << fmt("%.4f", d.score) << " [" << fmt("%.1f", d.box.x_min) << ", " << fmt("%.1f", d.box.y_min)
                    << ", " << fmt("%.1f", d.box.x_max) << ", " << fmt("%.1f", d.box.y_max) << "]\n";
            }
        }
        images.push_back({{"image", n}, {"detections", list}});
    }
    if (a.json_out) {
        out << json{{"lse", m.cfg.enable_lse}, {"gii", m.cfg.enable_gii}, {"images", images}}.dump(2) << '\n';
    }
    return kExitOk;
}

// ---- train-toy ----------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string out;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    bool lse = false;
    bool gii = false;
    bool json_out = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out)
{
    Config cfg = load_or(a.config, toy::toy_default_config());
    if (a.config.empty()) {
        cfg.encoder.enable_lse = a.lse;
        cfg.encoder.enable_gii = a.gii;
    } else {
        cfg.encoder.enable_lse = cfg.encoder.enable_lse || a.lse;
        cfg.encoder.enable_gii = cfg.encoder.enable_gii || a.gii;
    }
    if (a.epochs) {
        cfg.train.epochs = *a.epochs;
    }
    if (a.seed) {
        cfg.train.seed = *a.seed;
    }
    const std::filesystem::path ckpt(a.out);
    const std::filesystem::path failure = ckpt.string() + ".last_finite";
    toy::EpochCallback progress;
    if (!a.json_out) {
        progress = [&](int epoch, double loss) { out << "epoch " << epoch << " loss " << fmt("%.6f", loss) << '\n'; };
    }
    toy::TrainResult r;
    try {
        r = toy::train_toy(cfg.train, cfg.encoder, failure, progress);
    } catch (const TrainError& e) {
        throw TrainError(std::string(e.what()) + "; last finite parameters saved to " + failure.string());
    }
    ParamStore::from_params(r.params).save(ckpt);
    if (a.json_out) {
        out << json{{"checkpoint", a.out}, {"lse", cfg.encoder.enable_lse}, {"gii", cfg.encoder.enable_gii},
                    {"seed", cfg.train.seed}, {"epoch_loss", r.epoch_loss}}
                   .dump(2)
            << '\n';
    } else {
        out << "saved " << a.out << '\n';
    }
    return kExitOk;
}

// ---- eval ---------------------------------------------------------------------------

struct EvalArgs {
    std::string weights;
    std::string config;
    std::uint64_t seed = 0;
    int count = 64;
    bool json_out = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out)
{
    if (a.count <= 0) {
        throw ConfigError("--count must be positive");
    }
    const LoadedModel m = load_model(a.weights, a.config, "");
    const std::vector<toy::ToyScene> scenes = toy::gen_dataset(toy::eval_data_seed(a.seed), a.count);
    const toy::ApResult ap = toy::evaluate_toy(m.params, m.cfg, scenes);
    if (a.json_out) {
        json j = ap_json(ap);
        j["images"] = a.count;
        j["seed"] = a.seed;
        out << j.dump(2) << '\n';
    } else {
        out << "AP   " << fmt("%.4f", ap.ap) << "\nAP50 " << fmt("%.4f", ap.ap50) << "\nimages " << a.count << '\n';
    }
    return kExitOk;
}

// ---- gen-data -----------------------------------------------------------------------

struct GenArgs {
    std::uint64_t seed = 0;
    int count = 0;
    std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out)
{
    if (a.count <= 0) {
        throw ConfigError("--count must be positive");
    }
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    const std::vector<toy::ToyScene> scenes = toy::gen_dataset(toy::eval_data_seed(a.seed), a.count);
    json truth = json::array();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%05zu.lgt", i);
        save_tensor(dir / name, scenes[i].image);
        json objects = json::array();
        for (const toy::ToyObject& o : scenes[i].objects) {
            objects.push_back({{"class", toy::class_name(o.cls)},
                               {"class_id", static_cast<int>(o.cls)},
                               {"center", json::array({o.cx(), o.cy()})},
                               {"size", o.size},
                               {"box", box_json(o.box())}});
        }
        truth.push_back({{"file", name}, {"noise_sigma", scenes[i].noise_sigma}, {"objects", objects}});
    }
    std::ofstream os(dir / "truth.json");
    os << json{{"seed", a.seed}, {"count", a.count}, {"scenes", truth}}.dump(2) << '\n';
    if (!os) {
        throw FormatError("failed writing " + (dir / "truth.json").string());
    }
    out << "wrote " << a.count << " scenes to " << dir.string() << '\n';
    return kExitOk;
}

// ---- ablation -----------------------------------------------------------------------

struct AblationArgs {
    std::string config;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::optional<int> epochs;
    int eval_images = 64;
    bool json_out = false;
};

int cmd_ablation(const AblationArgs& a, std::ostream& out)
{
    const Config cfg = load_or(a.config, toy::toy_default_config());
    toy::AblationOptions opts;
    opts.train = cfg.train;
    opts.encoder = cfg.encoder;
    opts.seeds = a.seeds;
    opts.eval_images = a.eval_images;
    if (a.epochs) {
        opts.train.epochs = *a.epochs;
    }
    toy::AblationProgress progress;
    if (!a.json_out) {
        progress = [&](const toy::AblationRow& row, const toy::AblationRun& run) {
            out << "lse=" << row.lse << " gii=" << row.gii << " seed=" << run.seed << " AP50 "
                << fmt("%.4f", run.ap.ap50) << " loss " << fmt("%.4f", run.epoch_loss.front()) << " -> "
                << fmt("%.4f", run.epoch_loss.back()) << '\n';
        };
    }
    const std::vector<toy::AblationRow> rows = toy::run_ablation(opts, progress);
    if (a.json_out) {
        json j = json::array();
        for (const toy::AblationRow& r : rows) {
            json runs = json::array();
            for (const toy::AblationRun& run : r.runs) {
                runs.push_back({{"seed", run.seed}, {"epoch_loss", run.epoch_loss}, {"ap", ap_json(run.ap)}});
            }
            j.push_back({{"lse", r.lse},
                         {"gii", r.gii},
                         {"mean_ap50", r.mean_ap50()},
                         {"mean_ap", r.mean_ap()},
                         {"loss_decreased", r.loss_decreased()},
                         {"runs", runs}});
        }
        out << j.dump(2) << '\n';
    } else {
        out << toy::format_ablation(rows);
    }
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"LSE/GII encoder blocks: gradient checks, cost bench, toy detection harness"};
    app.require_subcommand(1);

    GradcheckArgs gc;
    auto* sub_gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks for every op");
    sub_gc->add_option("--seed", gc.seed, "Instance seed");
    sub_gc->add_option("--tol", gc.tol, "Composite tolerance; primitives use tol/10")->check(CLI::PositiveNumber);
    sub_gc->add_flag("--json", gc.json_out, "Write JSON to stdout");

    BenchArgs bench;
    auto* sub_bench = app.add_subcommand("bench", "Parameter/FLOP ablation table and optional op timings");
    sub_bench->add_option("--config", bench.config, "JSON config file")->check(CLI::ExistingFile);
    sub_bench->add_option("--resolution", bench.resolution, "Square input side in pixels");
    sub_bench->add_flag("--json", bench.json_out, "Write JSON to stdout");
    sub_bench->add_flag("--check", bench.check, "Exit 1 when a delta misses its target");
    sub_bench->add_flag("--time", bench.time, "Also time each op");
    sub_bench->add_option("--reps", bench.reps, "Timed repetitions per op (>= 30)");
    sub_bench->add_option("--time-shape", bench.time_shape, "Timing input shape n,c,h,w")->delimiter(',');

    RunArgs run;
    auto* sub_run = app.add_subcommand("run", "Forward a toy checkpoint on an image tensor file");
    sub_run->add_option("--weights", run.weights, "Checkpoint")->required()->check(CLI::ExistingFile);
    sub_run->add_option("--input", run.input, "Image tensor (n,3,S,S)")->required()->check(CLI::ExistingFile);
    sub_run->add_option("--heatmap", run.heatmap, "Write the finest encoder level of image 0 as a PGM (P5) heatmap");
    sub_run->add_option("--flags", run.flags, "Enabled modules: comma list of lse, gii, or none");
    sub_run->add_option("--config", run.config, "JSON config file")->check(CLI::ExistingFile);
    sub_run->add_flag("--json", run.json_out, "Write JSON to stdout");

    TrainArgs train;
    auto* sub_train = app.add_subcommand("train-toy", "Train the toy detector");
    sub_train->add_option("--epochs", train.epochs, "Epoch count")->check(CLI::NonNegativeNumber);
    sub_train->add_option("--seed", train.seed, "Seed for data, init and shuffling");
    sub_train->add_flag("--lse", train.lse, "Enable LSE");
    sub_train->add_flag("--gii", train.gii, "Enable GII");
    sub_train->add_option("--config", train.config, "JSON config file")->check(CLI::ExistingFile);
    sub_train->add_option("--out", train.out, "Checkpoint path")->required();
    sub_train->add_flag("--json", train.json_out, "Write JSON to stdout");

    EvalArgs ev;
    auto* sub_eval = app.add_subcommand("eval", "AP / AP50 of a toy checkpoint on generated scenes");
    sub_eval->add_option("--weights", ev.weights, "Checkpoint")->required()->check(CLI::ExistingFile);
    sub_eval->add_option("--seed", ev.seed, "Evaluation data seed");
    sub_eval->add_option("--count", ev.count, "Number of scenes");
    sub_eval->add_option("--config", ev.config, "JSON config file")->check(CLI::ExistingFile);
    sub_eval->add_flag("--json", ev.json_out, "Write JSON to stdout");

    GenArgs gen;
    auto* sub_gen = app.add_subcommand("gen-data", "Write toy scenes as tensor files plus truth.json");
    sub_gen->add_option("--seed", gen.seed, "Data seed (same scenes as eval --seed)")->required();
    sub_gen->add_option("--count", gen.count, "Number of scenes")->required();
    sub_gen->add_option("--out", gen.out, "Output directory")->required();

    AblationArgs abl;
    auto* sub_abl = app.add_subcommand("ablation", "Train and evaluate all four LSE/GII combinations");
    sub_abl->add_option("--config", abl.config, "JSON config file")->check(CLI::ExistingFile);
    sub_abl->add_option("--seeds", abl.seeds, "Comma-separated seeds")->delimiter(',');
    sub_abl->add_option("--epochs", abl.epochs, "Epoch count")->check(CLI::NonNegativeNumber);
    sub_abl->add_option("--eval-count", abl.eval_images, "Evaluation scenes per seed")->check(CLI::PositiveNumber);
    sub_abl->add_flag("--json", abl.json_out, "Write JSON to stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sub_gc->parsed()) return cmd_gradcheck(gc, out);
        if (sub_bench->parsed()) return cmd_bench(bench, out);
        if (sub_run->parsed()) return cmd_run(run, out);
        if (sub_train->parsed()) return cmd_train(train, out);
        if (sub_eval->parsed()) return cmd_eval(ev, out);
        if (sub_gen->parsed()) return cmd_gen(gen, out);
        if (sub_abl->parsed()) return cmd_ablation(abl, out);
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ShapeError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailed;
    }
    return kExitUsage;
}

} // namespace lgi
