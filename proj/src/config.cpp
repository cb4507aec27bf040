#include "lgi/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace lgi {

using nlohmann::json;

void TrainConfig::validate() const
{
    if (!(learning_rate >= 0.0)) {
        throw ConfigError("learning_rate must be >= 0");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("weight_decay must be >= 0");
    }
    if (batch_size <= 0) {
        throw ConfigError("batch_size must be positive, got " + std::to_string(batch_size));
    }
    if (epochs < 0) {
        throw ConfigError("epochs must be >= 0, got " + std::to_string(epochs));
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) {
        throw ConfigError("adam_beta1 must lie in [0, 1)");
    }
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("adam_beta2 must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) {
        throw ConfigError("adam_eps must be positive");
    }
    if (train_images <= 0) {
        throw ConfigError("train_images must be positive, got " + std::to_string(train_images));
    }
}

std::string to_string(GateActivation g)
{
    return g == GateActivation::sigmoid ? "sigmoid" : "none";
}

GateActivation gate_from_string(std::string_view s)
{
    if (s == "none") return GateActivation::none;
    if (s == "sigmoid") return GateActivation::sigmoid;
    throw ConfigError("gate_activation must be \"none\" or \"sigmoid\", got \"" + std::string(s) + "\"");
}

namespace {

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte)
{
    // nlohmann reports the 1-based count of characters read when the error hit.
    const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i < end; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

template <class V>
V get_number(const json& v, const std::string& key)
{
    if constexpr (std::is_integral_v<V>) {
        if (!v.is_number_integer()) {
            throw ConfigError("\"" + key + "\" must be an integer");
        }
        if constexpr (std::is_unsigned_v<V>) {
            if (v.is_number_unsigned()) return v.get<V>();
            if (v.get<std::int64_t>() < 0) {
                throw ConfigError("\"" + key + "\" must be non-negative");
            }
            return static_cast<V>(v.get<std::int64_t>());
        } else {
            if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT32_MAX)) {
                throw ConfigError("\"" + key + "\" is out of range");
            }
            const auto x = v.get<std::int64_t>();
            if (x < std::numeric_limits<V>::min() || x > std::numeric_limits<V>::max()) {
                throw ConfigError("\"" + key + "\" is out of range");
            }
            return static_cast<V>(x);
        }
    } else {
        if (!v.is_number()) {
            throw ConfigError("\"" + key + "\" must be a number");
        }
        return v.get<V>();
    }
}

bool get_bool(const json& v, const std::string& key)
{
    if (!v.is_boolean()) {
        throw ConfigError("\"" + key + "\" must be true or false");
    }
    return v.get<bool>();
}

using Setter = std::function<void(Config&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters()
{
    static const std::map<std::string, Setter> table = {
        {"d_model", [](Config& c, const json& v, const std::string& k) { c.encoder.d_model = get_number<std::int64_t>(v, k); }},
        {"split_ratio", [](Config& c, const json& v, const std::string& k) { c.encoder.split_ratio = get_number<double>(v, k); }},
        {"heads", [](Config& c, const json& v, const std::string& k) { c.encoder.heads = get_number<int>(v, k); }},
        {"d_ff", [](Config& c, const json& v, const std::string& k) { c.encoder.d_ff = get_number<std::int64_t>(v, k); }},
        {"aifi_depth", [](Config& c, const json& v, const std::string& k) { c.encoder.aifi_depth = get_number<int>(v, k); }},
        {"enable_lse", [](Config& c, const json& v, const std::string& k) { c.encoder.enable_lse = get_bool(v, k); }},
        {"enable_gii", [](Config& c, const json& v, const std::string& k) { c.encoder.enable_gii = get_bool(v, k); }},
        {"gii_to_mid", [](Config& c, const json& v, const std::string& k) { c.encoder.gii_to_mid = get_bool(v, k); }},
        {"gate_activation",
         [](Config& c, const json& v, const std::string& k) {
             if (!v.is_string()) {
                 throw ConfigError("\"" + k + "\" must be a string");
             }
             c.encoder.gate_activation = gate_from_string(v.get<std::string>());
         }},
        {"learning_rate", [](Config& c, const json& v, const std::string& k) { c.train.learning_rate = get_number<double>(v, k); }},
        {"weight_decay", [](Config& c, const json& v, const std::string& k) { c.train.weight_decay = get_number<double>(v, k); }},
        {"batch_size", [](Config& c, const json& v, const std::string& k) { c.train.batch_size = get_number<int>(v, k); }},
        {"epochs", [](Config& c, const json& v, const std::string& k) { c.train.epochs = get_number<int>(v, k); }},
        {"seed", [](Config& c, const json& v, const std::string& k) { c.train.seed = get_number<std::uint64_t>(v, k); }},
        {"adam_beta1", [](Config& c, const json& v, const std::string& k) { c.train.adam_beta1 = get_number<double>(v, k); }},
        {"adam_beta2", [](Config& c, const json& v, const std::string& k) { c.train.adam_beta2 = get_number<double>(v, k); }},
        {"adam_eps", [](Config& c, const json& v, const std::string& k) { c.train.adam_eps = get_number<double>(v, k); }},
        {"train_images", [](Config& c, const json& v, const std::string& k) { c.train.train_images = get_number<int>(v, k); }},
    };
    return table;
}

} // namespace

Config parse_config(std::string_view text, const Config& defaults)
{
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte);
        throw ParseError("config: malformed JSON at line " + std::to_string(line) + ", column " +
                             std::to_string(col) + ": " + e.what(),
                         line, col);
    }
    if (!doc.is_object()) {
        throw ConfigError("config: top level must be a JSON object");
    }
    Config cfg = defaults;
    const auto& table = setters();
    for (const auto& [key, value] : doc.items()) {
        auto it = table.find(key);
        if (it == table.end()) {
            throw ConfigError("config: unknown key \"" + key + "\"");
        }
        it->second(cfg, value, key);
    }
    cfg.encoder.validate();
    cfg.train.validate();
    return cfg;
}

Config load_config(const std::filesystem::path& path, const Config& defaults)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), defaults);
}

std::string serialize_config(const Config& cfg)
{
    const EncoderConfig& e = cfg.encoder;
    const TrainConfig& t = cfg.train;
    json j = {
        {"d_model", e.d_model},
        {"split_ratio", e.split_ratio},
        {"heads", e.heads},
        {"d_ff", e.d_ff},
        {"aifi_depth", e.aifi_depth},
        {"enable_lse", e.enable_lse},
        {"enable_gii", e.enable_gii},
        {"gii_to_mid", e.gii_to_mid},
        {"gate_activation", to_string(e.gate_activation)},
        {"learning_rate", t.learning_rate},
        {"weight_decay", t.weight_decay},
        {"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"seed", t.seed},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"train_images", t.train_images},
    };
    return j.dump(2);
}

} // namespace lgi
