// config.hpp — plain-text sectioned experiment configuration.
//
// Format: `[section]` headers followed by `key = value` lines; `#` starts a
// comment.  Unknown keys, duplicate keys, and malformed lines are errors with
// line numbers, and the regularity constraints of the problem block are
// validated at load.

#pragma once

#include "mildspde/mild_process.hpp"

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mildspde {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigEntry {
    std::string value;
    long line = 0;
    mutable bool consumed = false;
};

class ExperimentConfig {
  public:
    static ExperimentConfig parse(const std::string& text) {
        ExperimentConfig cfg;
        cfg.raw_ = text;
        std::istringstream in(text);
        std::string line;
        std::string section;
        long lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw ConfigError("line " + std::to_string(lineno) +
                                      ": malformed section header");
                section = trim(t.substr(1, t.size() - 2));
                if (section != "problem" && section != "run")
                    throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" +
                                      section + "]");
                continue;
            }
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (section.empty())
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": key outside of any section");
            if (key.empty() || value.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
            auto& sec = cfg.entries_[section];
            if (sec.count(key))
                throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key +
                                  "' (first at line " + std::to_string(sec[key].line) + ")");
            sec[key] = ConfigEntry{value, lineno, false};
        }
        cfg.check_known_keys();
        return cfg;
    }

    static ExperimentConfig load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    const std::string& raw() const { return raw_; }

    bool has(const std::string& section, const std::string& key) const {
        auto s = entries_.find(section);
        return s != entries_.end() && s->second.count(key) > 0;
    }

    std::string get_string(const std::string& section, const std::string& key) const {
        auto s = entries_.find(section);
        if (s == entries_.end() || !s->second.count(key))
            throw ConfigError("missing required key '" + key + "' in [" + section + "]");
        const auto& e = s->second.at(key);
        e.consumed = true;
        return e.value;
    }

    std::string get_string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
        return has(section, key) ? get_string(section, key) : fallback;
    }

    double get_real(const std::string& section, const std::string& key) const {
        return to_real(section, key, get_string(section, key));
    }
    double get_real_or(const std::string& section, const std::string& key,
                       double fallback) const {
        return has(section, key) ? get_real(section, key) : fallback;
    }
    long get_int(const std::string& section, const std::string& key) const {
        std::string v = get_string(section, key);
        try {
            std::size_t pos = 0;
            long r = std::stol(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "' in [" + section + "]: '" + v +
                              "' is not an integer");
        }
    }
    long get_int_or(const std::string& section, const std::string& key, long fallback) const {
        return has(section, key) ? get_int(section, key) : fallback;
    }

    std::vector<double> get_real_list(const std::string& section, const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split(get_string(section, key), ','))
            out.push_back(to_real(section, key, trim(item)));
        if (out.empty()) throw ConfigError("key '" + key + "' in [" + section + "]: empty list");
        return out;
    }
    std::vector<long> get_int_list(const std::string& section, const std::string& key) const {
        std::vector<long> out;
        for (const auto& item : split(get_string(section, key), ',')) {
            std::string v = trim(item);
            try {
                std::size_t pos = 0;
                long r = std::stol(v, &pos);
                if (pos != v.size()) throw std::invalid_argument(v);
                out.push_back(r);
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "' in [" + section + "]: '" + v +
                                  "' is not an integer");
            }
        }
        if (out.empty()) throw ConfigError("key '" + key + "' in [" + section + "]: empty list");
        return out;
    }

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }
    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == sep) {
                out.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        out.push_back(cur);
        return out;
    }

  private:
    double to_real(const std::string& section, const std::string& key,
                   const std::string& v) const {
        try {
            std::size_t pos = 0;
            double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "' in [" + section + "]: '" + v +
                              "' is not a number");
        }
    }

    void check_known_keys() const {
        static const std::vector<std::string> problem_keys = {
            "eigenvalues", "mode_count", "eta", "gamma", "alpha", "beta",
            "drift", "diffusion", "noise", "xi", "T"};
        static const std::vector<std::string> run_keys = {
            "experiment", "scheme", "time_steps", "paths", "seed", "workers", "phi",
            "mode_levels", "step_levels", "t0", "t1", "t2", "time", "increments",
            "offsets", "quad_cells", "outer_paths", "inner_paths", "trace_modes",
            "taylor_times", "taylor_increments", "continuations", "formula_cells"};
        auto verify = [](const std::map<std::string, ConfigEntry>& sec,
                         const std::vector<std::string>& known, const std::string& name) {
            for (const auto& [k, e] : sec) {
                bool ok = false;
                for (const auto& kk : known)
                    if (k == kk) ok = true;
                if (!ok)
                    throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + k +
                                      "' in [" + name + "]");
            }
        };
        auto pi = entries_.find("problem");
        if (pi != entries_.end()) verify(pi->second, problem_keys, "problem");
        auto ri = entries_.find("run");
        if (ri != entries_.end()) verify(ri->second, run_keys, "run");
    }

    std::string raw_;
    std::map<std::string, std::map<std::string, ConfigEntry>> entries_;
};

// scalar function spec "name" or "name:amplitude"
inline ScalarFunction parse_scalar_function(const std::string& spec) {
    auto parts = ExperimentConfig::split(spec, ':');
    double amp = parts.size() > 1 ? std::stod(parts[1]) : 1.0;
    return scalar_function_by_name(parts[0], amp);
}

inline TestFunction parse_test_function(const std::string& spec, std::size_t modes) {
    auto parts = ExperimentConfig::split(spec, ':');
    const std::string& name = parts[0];
    double a = parts.size() > 1 ? std::stod(parts[1]) : 1.0;
    if (name == "squared_norm") return tf_squared_norm();
    if (name == "exp_neg_sq") return tf_exp_neg_sq(a);
    if (name == "identity") return tf_identity();
    if (name == "linear_first") return tf_linear(basis_state(modes, 0, a));
    if (name == "integral_sin")
        return tf_nemytskii_integral(scalar_sin(a), make_collocation(modes));
    throw ConfigError("unknown test function '" + spec + "'");
}

// Builds the problem block.  Regularity constraints of the drift and
// diffusion assumptions are enforced here.
inline SpdeProblem build_problem(const ExperimentConfig& cfg) {
    SpdeProblem p;
    long modes = cfg.get_int("problem", "mode_count");
    if (modes < 1) throw ConfigError("mode_count must be positive");
    double eta = cfg.get_real_or("problem", "eta", 0.0);

    std::string eig = cfg.get_string_or("problem", "eigenvalues", "dirichlet_laplacian");
    if (eig == "dirichlet_laplacian") {
        p.model = dirichlet_laplacian(static_cast<std::size_t>(modes), eta);
    } else if (eig.rfind("list:", 0) == 0) {
        std::vector<double> ls;
        for (const auto& it : ExperimentConfig::split(eig.substr(5), ','))
            ls.push_back(std::stod(ExperimentConfig::trim(it)));
        if (static_cast<long>(ls.size()) != modes)
            throw ConfigError("eigenvalue list length disagrees with mode_count");
        p.model = SpectralModel(ls, eta);
    } else {
        throw ConfigError("unknown eigenvalues spec '" + eig + "'");
    }

    double gamma = cfg.get_real_or("problem", "gamma", 0.0);
    double alpha = cfg.get_real_or("problem", "alpha", 0.0);
    double beta = cfg.get_real_or("problem", "beta", 0.0);
    if (!(gamma - alpha < 1.0))
        throw ConfigError("regularity violation: gamma - alpha < 1 fails (drift assumption)");
    if (!(gamma - beta < 0.5))
        throw ConfigError("regularity violation: gamma - beta < 1/2 fails (diffusion assumption)");

    std::string noise = cfg.get_string_or("problem", "noise", "cylindrical");
    if (noise == "cylindrical") {
        p.noise = NoiseSpec::cylindrical(static_cast<std::size_t>(modes));
    } else if (noise.rfind("power:", 0) == 0) {
        double pw = std::stod(noise.substr(6));
        std::vector<double> q(static_cast<std::size_t>(modes));
        for (long j = 0; j < modes; ++j)
            q[static_cast<std::size_t>(j)] =
                std::pow(p.model.lambda(static_cast<std::size_t>(j)), pw);
        p.noise = NoiseSpec(q);
    } else {
        throw ConfigError("unknown noise spec '" + noise + "'");
    }

    std::string drift = cfg.get_string("problem", "drift");
    auto dparts = ExperimentConfig::split(drift, ':');
    if (dparts[0] == "zero") {
        p.drift = DriftSpec::zero_drift(gamma, alpha);
    } else if (dparts[0] == "linear_diag") {
        double c = dparts.size() > 1 ? std::stod(dparts[1]) : -1.0;
        p.drift = DriftSpec::linear_diag(std::vector<double>(static_cast<std::size_t>(modes), c),
                                         gamma, alpha);
    } else if (dparts[0] == "nemytskii") {
        if (dparts.size() < 2) throw ConfigError("drift nemytskii needs a function name");
        double amp = dparts.size() > 2 ? std::stod(dparts[2]) : 1.0;
        p.drift = DriftSpec::nemytskii_drift(scalar_function_by_name(dparts[1], amp),
                                             make_collocation(static_cast<std::size_t>(modes)),
                                             gamma, alpha);
    } else {
        throw ConfigError("unknown drift spec '" + drift + "'");
    }

    std::string diff = cfg.get_string("problem", "diffusion");
    auto bparts = ExperimentConfig::split(diff, ':');
    auto power_amps = [&](double pw) {
        std::vector<double> b(static_cast<std::size_t>(modes));
        for (long j = 0; j < modes; ++j)
            b[static_cast<std::size_t>(j)] =
                std::pow(p.model.lambda(static_cast<std::size_t>(j)), pw);
        return b;
    };
    if (bparts[0] == "additive_power") {
        p.diffusion = DiffusionSpec::additive(power_amps(std::stod(bparts.at(1))), beta);
    } else if (bparts[0] == "additive_list") {
        std::vector<double> b;
        for (const auto& it : ExperimentConfig::split(bparts.at(1), ','))
            b.push_back(std::stod(ExperimentConfig::trim(it)));
        if (static_cast<long>(b.size()) != modes)
            throw ConfigError("additive_list length disagrees with mode_count");
        p.diffusion = DiffusionSpec::additive(b, beta);
    } else if (bparts[0] == "additive_const") {
        double c = bparts.size() > 1 ? std::stod(bparts[1]) : 1.0;
        p.diffusion = DiffusionSpec::additive(
            std::vector<double>(static_cast<std::size_t>(modes), c), beta);
    } else if (bparts[0] == "multiplicative") {
        if (bparts.size() < 2) throw ConfigError("diffusion multiplicative needs a function");
        double amp = bparts.size() > 2 ? std::stod(bparts[2]) : 1.0;
        p.diffusion = DiffusionSpec::multiplicative(
            scalar_function_by_name(bparts[1], amp),
            std::vector<double>(static_cast<std::size_t>(modes), 1.0), beta);
    } else if (bparts[0] == "nemytskii") {
        if (bparts.size() < 2) throw ConfigError("diffusion nemytskii needs a function");
        double amp = bparts.size() > 2 ? std::stod(bparts[2]) : 1.0;
        p.diffusion = DiffusionSpec::nemytskii_diffusion(
            scalar_function_by_name(bparts[1], amp),
            make_collocation(static_cast<std::size_t>(modes)), beta);
    } else {
        throw ConfigError("unknown diffusion spec '" + diff + "'");
    }

    std::string xi = cfg.get_string_or("problem", "xi", "zero");
    auto xparts = ExperimentConfig::split(xi, ':');
    p.xi = ModalState(static_cast<std::size_t>(modes), gamma);
    if (xparts[0] == "zero") {
    } else if (xparts[0] == "first") {
        p.xi[0] = xparts.size() > 1 ? std::stod(xparts[1]) : 1.0;
    } else if (xparts[0] == "decay") {
        double v = xparts.size() > 1 ? std::stod(xparts[1]) : 1.0;
        for (long j = 0; j < modes; ++j)
            p.xi[static_cast<std::size_t>(j)] = v / static_cast<double>(j + 1);
    } else {
        throw ConfigError("unknown xi spec '" + xi + "'");
    }

    p.horizon = cfg.get_real("problem", "T");
    p.validate();
    return p;
}

}  // namespace mildspde
