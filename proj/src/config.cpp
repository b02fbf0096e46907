#include "cclap/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

namespace cclap {

namespace {

using json = nlohmann::json;
using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T, typename Field>
Setter numeric(Field RunConfig::* f) {
    return [f](RunConfig& c, const json& v) {
        if (!v.is_number()) throw ConfigError("config: expected a number");
        c.*f = static_cast<Field>(v.get<T>());
    };
}

const std::map<std::string, Setter>& schema() {
    static const std::map<std::string, Setter> s = {
        {"seed",
         [](RunConfig& c, const json& v) {
             if (!v.is_number_unsigned()) throw ConfigError("config: seed must be a nonnegative integer");
             c.seed = v.get<uint64_t>();
         }},
        {"image_size", numeric<int>(&RunConfig::image_size)},
        {"latent_channels", numeric<int>(&RunConfig::latent_channels)},
        {"latent_spatial", numeric<int>(&RunConfig::latent_spatial)},
        {"timesteps", numeric<int>(&RunConfig::timesteps)},
        {"beta_start", numeric<double>(&RunConfig::beta_start)},
        {"beta_end", numeric<double>(&RunConfig::beta_end)},
        {"lr", numeric<double>(&RunConfig::lr)},
        {"batch", numeric<int>(&RunConfig::batch)},
        {"ae_epochs", numeric<int>(&RunConfig::ae_epochs)},
        {"kl_weight", numeric<double>(&RunConfig::kl_weight)},
        {"ldm_steps", numeric<int>(&RunConfig::ldm_steps)},
        {"style_iters", numeric<int>(&RunConfig::style_iters)},
        {"freeze_encoder",
         [](RunConfig& c, const json& v) {
             if (!v.is_boolean()) throw ConfigError("config: freeze_encoder must be a boolean");
             c.freeze_encoder = v.get<bool>();
         }},
        {"probe_epochs", numeric<int>(&RunConfig::probe_epochs)},
        {"manifest",
         [](RunConfig& c, const json& v) {
             if (!v.is_string()) throw ConfigError("config: manifest must be a string");
             c.manifest = v.get<std::string>();
         }},
        {"log_dir",
         [](RunConfig& c, const json& v) {
             if (!v.is_string()) throw ConfigError("config: log_dir must be a string");
             c.log_dir = v.get<std::string>();
         }},
    };
    return s;
}

}  // namespace

void RunConfig::validate() const {
    if (image_size != 64) throw ConfigError("config: this build supports image_size 64 only");
    if (latent_channels < 1 || latent_spatial < 4)
        throw ConfigError("config: degenerate latent geometry");
    if (image_size % latent_spatial != 0)
        throw ConfigError("config: latent_spatial must divide image_size");
    if (timesteps < 2) throw ConfigError("config: timesteps must be >= 2");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("config: need 0 < beta_start <= beta_end < 1");
    if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
    if (batch < 1) throw ConfigError("config: batch must be >= 1");
    if (ae_epochs < 1 || ldm_steps < 1 || style_iters < 1 || probe_epochs < 1)
        throw ConfigError("config: training lengths must be >= 1");
    if (kl_weight < 0.0) throw ConfigError("config: kl_weight must be nonnegative");
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open " + path);
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("config: " + path + " is not a JSON object");
    RunConfig cfg;
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto s = schema().find(it.key());
        if (s == schema().end()) throw ConfigError("config: unknown key '" + it.key() + "'");
        try {
            s->second(cfg, it.value());
        } catch (const ConfigError&) {
            throw ConfigError("config: bad value for '" + it.key() + "'");
        }
    }
    cfg.validate();
    return cfg;
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto s = schema().find(key);
    if (s == schema().end()) throw ConfigError("config: unknown key '" + key + "'");
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;  // bare strings (paths) arrive unquoted
    s->second(cfg, v);
    cfg.validate();
}

}  // namespace cclap
