#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "scorevae/data.hpp"
#include "scorevae/errors.hpp"
#include "scorevae/net.hpp"
#include "scorevae/objectives.hpp"
#include "scorevae/sde.hpp"

namespace scorevae {

struct DatasetConfig {
    DatasetKind kind = DatasetKind::GmmRing;
    int n = 4096;
    int dim = 2;        // gaussian only
    int modes = 8;      // gmm_ring
    double radius = 2.0;
    double std_dev = 0.2;
    int squares = 4;    // checkerboard
    std::string path;   // images (IDX)
};

struct NetConfig {
    std::vector<int> hidden = {48, 48};
    int time_features = 4;
    Activation activation = Activation::Gelu;
};

struct OptimizerConfig {
    double learning_rate = 2e-4;
    double ema_rate = 0.999;
    int n_iters = 2000;
    int batch_size = 256;
};

struct SamplerConfig {
    int n_steps = 200;
    double t_eps = kDefaultTEps;
};

// Declarative experiment recipe: dataset, model sizes, schedule, optimizer,
// sampler, and seeds. Parsed from a key=value sections file.
struct ExperimentConfig {
    DatasetConfig dataset;
    int latent_dim = 2;
    double beta = 0.01;
    SdeSpec sde;
    NetConfig prior_net;
    NetConfig encoder_net;
    NetConfig corrector_net{{32, 32}, 4, Activation::Gelu};
    NetConfig decoder_net{{48, 48}, 0, Activation::Gelu};
    NetConfig vae_encoder_net{{48, 48}, 0, Activation::Gelu};
    NetConfig diffdecoder_net;
    OptimizerConfig optimizer;
    SamplerConfig sampler;
    WeightingKind prior_weighting = WeightingKind::Simple;
    std::uint64_t seed = 0;
    int n_test = 256;
    std::uint64_t eval_seed = 777;

    int data_dim() const {
        switch (dataset.kind) {
            case DatasetKind::GmmRing:
            case DatasetKind::Checkerboard: return 2;
            case DatasetKind::Gaussian: return dataset.dim;
            case DatasetKind::Images: return dataset.dim;
        }
        return 2;
    }

    void validate() const {
        if (latent_dim < 1) throw ConfigError("model.latent_dim >= 1 required");
        if (beta < 0.0) throw ConfigError("train.beta >= 0 required");
        if (optimizer.n_iters < 1 || optimizer.batch_size < 1)
            throw ConfigError("optimizer.n_iters and batch_size must be >= 1");
        if (sampler.n_steps < 1) throw ConfigError("sampler.n_steps >= 1 required");
        if (!(sampler.t_eps > 0.0 && sampler.t_eps < sde.t_end)) throw ConfigError("sampler.t_eps in (0, t_end)");
        if (dataset.n < 2) throw ConfigError("dataset.n >= 2 required");
        SdeSpec checked = sde;
        checked.dim = data_dim();
        checked.validate();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + v + "' for " + key);
    }
}

inline int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int i = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value '" + v + "' for " + key);
    }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("config: bad seed value '" + v + "' for " + key);
    }
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

inline void apply_net_key(NetConfig& net, const std::string& section, const std::string& key,
                          const std::string& value) {
    if (key == "hidden") net.hidden = to_int_list(section + "." + key, value);
    else if (key == "time_features") net.time_features = to_int(section + "." + key, value);
    else if (key == "activation") net.activation = activation_from_name(value);
    else throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
}

} // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        using detail::to_double;
        using detail::to_int;
        using detail::to_u64;

        if (section == "dataset") {
            if (key == "kind") {
                if (value == "gmm_ring") cfg.dataset.kind = DatasetKind::GmmRing;
                else if (value == "checkerboard") cfg.dataset.kind = DatasetKind::Checkerboard;
                else if (value == "gaussian") cfg.dataset.kind = DatasetKind::Gaussian;
                else if (value == "images") cfg.dataset.kind = DatasetKind::Images;
                else throw ConfigError("config: unknown dataset kind '" + value + "'");
            } else if (key == "n") cfg.dataset.n = to_int(key, value);
            else if (key == "dim") cfg.dataset.dim = to_int(key, value);
            else if (key == "modes") cfg.dataset.modes = to_int(key, value);
            else if (key == "radius") cfg.dataset.radius = to_double(key, value);
            else if (key == "std") cfg.dataset.std_dev = to_double(key, value);
            else if (key == "squares") cfg.dataset.squares = to_int(key, value);
            else if (key == "path") cfg.dataset.path = value;
            else throw ConfigError("config: unknown key '" + key + "' in [dataset]");
        } else if (section == "model") {
            if (key == "latent_dim") cfg.latent_dim = to_int(key, value);
            else throw ConfigError("config: unknown key '" + key + "' in [model]");
        } else if (section == "sde") {
            if (key == "beta_min") cfg.sde.beta_min = to_double(key, value);
            else if (key == "beta_max") cfg.sde.beta_max = to_double(key, value);
            else if (key == "t_end") cfg.sde.t_end = to_double(key, value);
            else throw ConfigError("config: unknown key '" + key + "' in [sde]");
        } else if (section == "prior_net") detail::apply_net_key(cfg.prior_net, section, key, value);
        else if (section == "encoder_net") detail::apply_net_key(cfg.encoder_net, section, key, value);
        else if (section == "corrector_net") detail::apply_net_key(cfg.corrector_net, section, key, value);
        else if (section == "decoder_net") detail::apply_net_key(cfg.decoder_net, section, key, value);
        else if (section == "vae_encoder_net") detail::apply_net_key(cfg.vae_encoder_net, section, key, value);
        else if (section == "diffdecoder_net") detail::apply_net_key(cfg.diffdecoder_net, section, key, value);
        else if (section == "optimizer") {
            if (key == "learning_rate") cfg.optimizer.learning_rate = to_double(key, value);
            else if (key == "ema_rate") cfg.optimizer.ema_rate = to_double(key, value);
            else if (key == "n_iters") cfg.optimizer.n_iters = to_int(key, value);
            else if (key == "batch_size") cfg.optimizer.batch_size = to_int(key, value);
            else throw ConfigError("config: unknown key '" + key + "' in [optimizer]");
        } else if (section == "sampler") {
            if (key == "n_steps") cfg.sampler.n_steps = to_int(key, value);
            else if (key == "t_eps") cfg.sampler.t_eps = to_double(key, value);
            else throw ConfigError("config: unknown key '" + key + "' in [sampler]");
        } else if (section == "train") {
            if (key == "beta") cfg.beta = to_double(key, value);
            else if (key == "seed") cfg.seed = to_u64(key, value);
            else if (key == "weighting") cfg.prior_weighting = weighting_from_name(value);
            else throw ConfigError("config: unknown key '" + key + "' in [train]");
        } else if (section == "eval") {
            if (key == "n_test") cfg.n_test = to_int(key, value);
            else if (key == "seed") cfg.eval_seed = to_u64(key, value);
            else throw ConfigError("config: unknown key '" + key + "' in [eval]");
        } else {
            throw ConfigError("config: unknown section [" + section + "]");
        }
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// Deterministic sub-seed derivation (splitmix64 over seed ^ tag hash).
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline Dataset build_dataset(const ExperimentConfig& cfg, std::uint64_t seed_override,
                             int n_override = -1) {
    RandomStream rng(seed_override);
    int n = n_override > 0 ? n_override : cfg.dataset.n;
    switch (cfg.dataset.kind) {
        case DatasetKind::GmmRing:
            return gmm_ring(n, cfg.dataset.modes, cfg.dataset.radius, cfg.dataset.std_dev, rng);
        case DatasetKind::Checkerboard: return checkerboard(n, cfg.dataset.squares, rng);
        case DatasetKind::Gaussian: return gaussian_dataset(n, cfg.dataset.dim, rng);
        case DatasetKind::Images: return idx_load(cfg.dataset.path);
    }
    throw ConfigError("build_dataset: unreachable dataset kind");
}

} // namespace scorevae
