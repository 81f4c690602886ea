#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "scorevae/errors.hpp"
#include "scorevae/net.hpp"
#include "scorevae/sde.hpp"

namespace scorevae {

// Deterministic parameter container: plain-text header followed by the flat
// little-endian f32 parameter arrays in declared net order. The writer is
// canonical, so load(save(x)) round-trips byte-identically.
struct Checkpoint {
    int format_version = 1;
    std::string component;
    int iteration = 0;
    std::uint64_t seed = 0;
    std::string weights = "ema"; // which parameters the payload holds
    int latent_dim = 0;
    SdeSpec sde;
    std::vector<std::pair<std::string, NetSpec>> nets;
    std::vector<float> payload;

    size_t declared_param_count() const {
        size_t n = 0;
        for (const auto& [name, spec] : nets) {
            for (size_t l = 0; l + 1 < spec.widths.size(); ++l)
                n += static_cast<size_t>(spec.widths[l]) * spec.widths[l + 1] + spec.widths[l + 1];
        }
        return n;
    }
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join_ints(const std::vector<int>& xs) {
    std::string s;
    for (size_t i = 0; i < xs.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(xs[i]);
    }
    return s;
}

inline std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open '" + path + "'");
    out << "scorevae-checkpoint v" << ck.format_version << "\n";
    out << "component=" << ck.component << "\n";
    out << "iteration=" << ck.iteration << "\n";
    out << "seed=" << ck.seed << "\n";
    out << "weights=" << ck.weights << "\n";
    out << "latent_dim=" << ck.latent_dim << "\n";
    out << "sde.beta_min=" << format_double(ck.sde.beta_min) << "\n";
    out << "sde.beta_max=" << format_double(ck.sde.beta_max) << "\n";
    out << "sde.t_end=" << format_double(ck.sde.t_end) << "\n";
    out << "sde.dim=" << ck.sde.dim << "\n";
    out << "nets=" << ck.nets.size() << "\n";
    for (size_t i = 0; i < ck.nets.size(); ++i) {
        const auto& [name, spec] = ck.nets[i];
        std::string p = "net." + std::to_string(i) + ".";
        out << p << "name=" << name << "\n";
        out << p << "widths=" << join_ints(spec.widths) << "\n";
        out << p << "activation=" << activation_name(spec.activation) << "\n";
        out << p << "time_features=" << spec.time_features << "\n";
    }
    out << "payload=" << ck.payload.size() << "\n";
    for (float f : ck.payload) {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                              static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!out) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

inline std::pair<std::string, std::string> split_kv(const std::string& line) {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed header line '" + line + "'");
    return {line.substr(0, eq), line.substr(eq + 1)};
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("checkpoint: empty file");
    if (line.rfind("scorevae-checkpoint v", 0) != 0)
        throw FormatError("checkpoint: bad signature line '" + line + "'");
    Checkpoint ck;
    ck.format_version = std::stoi(line.substr(21));
    if (ck.format_version != 1)
        throw FormatError("checkpoint: unsupported format version " + std::to_string(ck.format_version));

    size_t payload_count = static_cast<size_t>(-1);
    int net_count = 0;
    std::vector<std::string> net_field(0);
    while (std::getline(in, line)) {
        auto [key, value] = split_kv(line);
        if (key == "component") ck.component = value;
        else if (key == "iteration") ck.iteration = std::stoi(value);
        else if (key == "seed") ck.seed = std::stoull(value);
        else if (key == "weights") ck.weights = value;
        else if (key == "latent_dim") ck.latent_dim = std::stoi(value);
        else if (key == "sde.beta_min") ck.sde.beta_min = std::stod(value);
        else if (key == "sde.beta_max") ck.sde.beta_max = std::stod(value);
        else if (key == "sde.t_end") ck.sde.t_end = std::stod(value);
        else if (key == "sde.dim") ck.sde.dim = std::stoi(value);
        else if (key == "nets") {
            net_count = std::stoi(value);
            ck.nets.resize(net_count);
        } else if (key.rfind("net.", 0) == 0) {
            auto dot = key.find('.', 4);
            int idx = std::stoi(key.substr(4, dot - 4));
            if (idx < 0 || idx >= net_count) throw FormatError("checkpoint: net index out of range in '" + key + "'");
            std::string field = key.substr(dot + 1);
            if (field == "name") ck.nets[idx].first = value;
            else if (field == "widths") ck.nets[idx].second.widths = split_ints(value);
            else if (field == "activation") ck.nets[idx].second.activation = activation_from_name(value);
            else if (field == "time_features") ck.nets[idx].second.time_features = std::stoi(value);
            else throw FormatError("checkpoint: unknown net field '" + field + "'");
        } else if (key == "payload") {
            payload_count = std::stoul(value);
            break;
        } else {
            throw FormatError("checkpoint: unknown header key '" + key + "'");
        }
    }
    if (payload_count == static_cast<size_t>(-1)) throw FormatError("checkpoint: missing payload marker");
    if (payload_count != ck.declared_param_count())
        throw FormatError("checkpoint: payload count " + std::to_string(payload_count) +
                          " does not match declared parameter count " +
                          std::to_string(ck.declared_param_count()));

    ck.payload.resize(payload_count);
    std::vector<unsigned char> bytes(payload_count * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<size_t>(in.gcount()) != bytes.size())
        throw FormatError("checkpoint: truncated payload, expected " + std::to_string(bytes.size()) +
                          " bytes, got " + std::to_string(in.gcount()));
    for (size_t i = 0; i < payload_count; ++i) {
        std::uint32_t u = std::uint32_t(bytes[4 * i]) | (std::uint32_t(bytes[4 * i + 1]) << 8) |
                          (std::uint32_t(bytes[4 * i + 2]) << 16) | (std::uint32_t(bytes[4 * i + 3]) << 24);
        std::memcpy(&ck.payload[i], &u, 4);
    }
    return ck;
}

/*------------------------- model <-> payload glue -------------------------*/

inline void append_params(std::vector<float>& payload, const std::vector<double>& flat) {
    payload.reserve(payload.size() + flat.size());
    for (double v : flat) payload.push_back(static_cast<float>(v));
}

// Extract the i-th net's parameters from the payload, widened to double.
inline std::vector<double> net_params_from_payload(const Checkpoint& ck, size_t net_index) {
    size_t off = 0;
    for (size_t i = 0; i < net_index; ++i) {
        const NetSpec& spec = ck.nets[i].second;
        for (size_t l = 0; l + 1 < spec.widths.size(); ++l)
            off += static_cast<size_t>(spec.widths[l]) * spec.widths[l + 1] + spec.widths[l + 1];
    }
    const NetSpec& spec = ck.nets[net_index].second;
    size_t count = 0;
    for (size_t l = 0; l + 1 < spec.widths.size(); ++l)
        count += static_cast<size_t>(spec.widths[l]) * spec.widths[l + 1] + spec.widths[l + 1];
    std::vector<double> out(count);
    for (size_t i = 0; i < count; ++i) out[i] = static_cast<double>(ck.payload[off + i]);
    return out;
}

inline Mlp mlp_from_checkpoint(const Checkpoint& ck, size_t net_index) {
    Mlp net(ck.nets[net_index].second);
    net.unflatten(net_params_from_payload(ck, net_index));
    return net;
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_file_bytes: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace scorevae
