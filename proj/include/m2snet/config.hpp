#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "m2snet/errors.hpp"
#include "m2snet/matchnet.hpp"

namespace m2s {

inline constexpr const char* kVersion = "0.1.0";

/// Declarative `key = value` sections. The raw text is kept verbatim so runs
/// can echo exactly what they were configured with.
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, const std::string& origin = "config") {
        ConfigFile cfg;
        cfg.text_ = text;
        std::istringstream in(text);
        std::string line;
        std::string section;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#' || trimmed[0] == ';') continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']' || trimmed.size() < 3) {
                    throw ConfigError(origin + " line " + std::to_string(line_no) +
                                      ": malformed section header '" + trimmed + "'");
                }
                section = trimmed.substr(1, trimmed.size() - 2);
                continue;
            }
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(origin + " line " + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + trimmed + "'");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(origin + " line " + std::to_string(line_no) + ": empty key");
            }
            cfg.values_[section + "." + key] = value;
        }
        return cfg;
    }

    std::optional<std::string> get(const std::string& section, const std::string& key) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        values_[section + "." + key] = value;
    }

    std::string require(const std::string& section, const std::string& key) const {
        auto v = get(section, key);
        if (!v) throw ConfigError("missing config key [" + section + "] " + key);
        return *v;
    }

    const std::string& text() const { return text_; }

private:
    static std::string trim(const std::string& s) {
        size_t b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        size_t e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::string text_;
    std::map<std::string, std::string> values_;
};

namespace detail {

inline int to_int(const std::string& value, const std::string& what) {
    try {
        size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(what + ": expected an integer, got '" + value + "'");
    }
}

inline double to_double(const std::string& value, const std::string& what) {
    try {
        size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(what + ": expected a number, got '" + value + "'");
    }
}

inline std::pair<int, int> to_hw(const std::string& value, const std::string& what) {
    const size_t x = value.find('x');
    if (x == std::string::npos) throw ConfigError(what + ": expected HxW, got '" + value + "'");
    return {to_int(value.substr(0, x), what), to_int(value.substr(x + 1), what)};
}

}  // namespace detail

/// Build a NetConfig from the [net] section; unspecified keys keep the
/// defaults for the declared measurement/modalities/depth.
inline NetConfig net_config_from(const ConfigFile& cfg) {
    const std::string measurement_s = cfg.get("net", "measurement").value_or("metric");
    const Measurement measurement = parse_measurement(measurement_s);
    const int modalities =
        detail::to_int(cfg.get("net", "modalities").value_or("1"), "[net] modalities");
    const std::string depth = cfg.get("net", "depth").value_or("deep");
    if (depth != "shallow" && depth != "deep") {
        throw ConfigError("[net] depth: expected shallow|deep, got '" + depth + "'");
    }
    NetConfig net = NetConfig::defaults(measurement, modalities, depth == "deep");
    if (auto v = cfg.get("net", "embedding_dim")) {
        net.embedding_dim = detail::to_int(*v, "[net] embedding_dim");
    }
    if (auto v = cfg.get("net", "question_len")) {
        net.question_len = detail::to_int(*v, "[net] question_len");
    }
    if (auto v = cfg.get("net", "answer_len")) net.answer_len = detail::to_int(*v, "[net] answer_len");
    if (auto v = cfg.get("net", "dropout")) net.dropout_rate = detail::to_double(*v, "[net] dropout");
    if (auto v = cfg.get("net", "bn_eps")) net.bn_eps = detail::to_double(*v, "[net] bn_eps");
    if (auto v = cfg.get("net", "bn_momentum")) {
        net.bn_momentum = detail::to_double(*v, "[net] bn_momentum");
    }
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const std::string prefix = "conv" + std::to_string(li + 1);
        ConvLayerSpec& layer = net.layers[li];
        if (auto v = cfg.get("net", prefix + "_filters")) {
            layer.filters = detail::to_int(*v, "[net] " + prefix + "_filters");
        }
        if (auto v = cfg.get("net", prefix + "_kernel")) {
            auto [h, w] = detail::to_hw(*v, "[net] " + prefix + "_kernel");
            layer.kernel_h = h;
            layer.kernel_w = w;
        }
        if (auto v = cfg.get("net", prefix + "_pool")) {
            if (*v == "global") {
                layer.global_pool = true;
            } else {
                const size_t slash = v->find('/');
                const std::string window = slash == std::string::npos ? *v : v->substr(0, slash);
                auto [ph, pw] = detail::to_hw(window, "[net] " + prefix + "_pool");
                layer.global_pool = false;
                layer.pool_h = ph;
                layer.pool_w = pw;
                if (slash != std::string::npos) {
                    auto [sh, sw] = detail::to_hw(v->substr(slash + 1), "[net] " + prefix + "_pool");
                    layer.pool_stride_h = sh;
                    layer.pool_stride_w = sw;
                } else {
                    layer.pool_stride_h = ph;
                    layer.pool_stride_w = pw;
                }
            }
        }
    }
    net.validate();
    return net;
}

inline std::string render_net_config(const NetConfig& net) {
    std::ostringstream out;
    out << "[net]\n";
    out << "measurement = " << measurement_name(net.measurement) << "\n";
    out << "modalities = " << net.modalities << "\n";
    out << "depth = " << (net.layers.size() == 2 ? "deep" : "shallow") << "\n";
    out << "embedding_dim = " << net.embedding_dim << "\n";
    out << "question_len = " << net.question_len << "\n";
    out << "answer_len = " << net.answer_len << "\n";
    out << "dropout = " << net.dropout_rate << "\n";
    out << "bn_eps = " << net.bn_eps << "\n";
    out << "bn_momentum = " << net.bn_momentum << "\n";
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const std::string prefix = "conv" + std::to_string(li + 1);
        const ConvLayerSpec& layer = net.layers[li];
        out << prefix << "_filters = " << layer.filters << "\n";
        out << prefix << "_kernel = " << layer.kernel_h << "x" << layer.kernel_w << "\n";
        if (layer.global_pool) {
            out << prefix << "_pool = global\n";
        } else {
            out << prefix << "_pool = " << layer.pool_h << "x" << layer.pool_w << "/"
                << layer.pool_stride_h << "x" << layer.pool_stride_w << "\n";
        }
    }
    return out.str();
}

}  // namespace m2s
