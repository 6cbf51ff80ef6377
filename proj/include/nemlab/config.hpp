/*
   Copyright 2026 The nemlab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// Run configuration: INI-style text ("[section]" headers, "key = value",
// whole-line "#" or ";" comments), flattened to dotted keys. Every key must
// appear in the schema below; values are type-checked and range-checked
// before anything runs.

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nemlab/error.hpp"
#include "nemlab/io.hpp"

namespace nemlab {

enum class ValueType { real, integer, string, boolean, real_list };

inline const char* to_string(ValueType t) {
    switch (t) {
    case ValueType::real: return "real";
    case ValueType::integer: return "integer";
    case ValueType::string: return "string";
    case ValueType::boolean: return "boolean";
    case ValueType::real_list: return "list of reals";
    }
    return "?";
}

struct SchemaEntry {
    std::string key;
    ValueType type;
    std::string default_value;
    std::string doc;
};

inline constexpr int kSchemaVersion = 1;

/// The documented schema. Keys under experiment.* and khasminskii.* only
/// override the per-experiment defaults when set explicitly.
inline const std::vector<SchemaEntry>& config_schema() {
    static const std::vector<SchemaEntry> schema = {
        {"schema_version", ValueType::integer, "1", "must equal 1"},
        {"seed", ValueType::integer, "1", "master seed"},
        {"threads", ValueType::integer, "1", "worker threads (results do not depend on it)"},

        {"drift.name", ValueType::string, "linear_ou", "linear_ou | capped_density | smoothed_interaction | singular_well"},
        {"drift.theta", ValueType::real, "1", "confinement -theta x"},
        {"drift.kappa", ValueType::real, "0.1", "density coupling strength"},
        {"drift.tau", ValueType::real, "0.6", "time weight t^tau on the density term"},
        {"drift.M", ValueType::real, "5", "capped_density: cap on r"},
        {"drift.h", ValueType::real, "0.25", "smoothed_interaction: kernel width"},
        {"drift.c", ValueType::real, "0.5", "singular_well: strength"},
        {"drift.gamma", ValueType::real, "0.3", "singular_well: exponent"},
        {"drift.x0", ValueType::real, "0", "singular_well: centre"},
        {"drift.p2", ValueType::real, "3", "singular_well: declared space exponent"},
        {"drift.q2", ValueType::real, "4", "singular_well: declared time exponent"},
        {"drift.k", ValueType::real, "2", "Lipschitz index k of the density dependence"},
        {"drift.K", ValueType::real, "", "override the computed constant K"},

        {"diffusion.a", ValueType::real, "2", "constant a = sigma^2"},

        {"grid.cells", ValueType::integer, "2000", "number of cells (>= 8)"},
        {"grid.x_min", ValueType::real, "-6", "left wall"},
        {"grid.x_max", ValueType::real, "6", "right wall"},

        {"init.kind", ValueType::string, "gaussian", "gaussian | point | file"},
        {"init.mean", ValueType::real, "0", "mean (or point location)"},
        {"init.sd", ValueType::real, "0.02", "standard deviation"},
        {"init.file", ValueType::string, "", "density CSV for kind = file"},

        {"time.T", ValueType::real, "1", "horizon"},
        {"time.refine", ValueType::string, "geometric", "geometric | uniform"},
        {"time.nodes_per_decade", ValueType::real, "40", "geometric refinement density"},
        {"time.t_min_fraction", ValueType::real, "1e-4", "first geometric node as a fraction of T"},
        {"time.steps", ValueType::integer, "100", "uniform refinement: number of intervals"},
        {"time.dt_max", ValueType::real, "1e-4", "largest solver substep"},

        {"picard.tol", ValueType::real, "1e-6", "sup-t L1 residual tolerance"},
        {"picard.max_iter", ValueType::integer, "50", "iteration cap"},
        {"picard.lambda0", ValueType::real, "1", "initial discount lambda"},
        {"picard.ratio_limit", ValueType::real, "0.9", "contraction ratio that triggers lambda doubling"},
        {"picard.max_lambda_doublings", ValueType::integer, "6", "lambda escalations before giving up"},
        {"picard.p", ValueType::real, "2", "d_lambda index p"},
        {"picard.k", ValueType::real, "inf", "d_lambda index k"},

        {"particles.N", ValueType::integer, "100000", "number of particles"},
        {"particles.dt", ValueType::real, "1e-3", "Euler-Maruyama step"},
        {"particles.bandwidth", ValueType::real, "0", "KDE bandwidth (0 = Silverman)"},
        {"particles.output_steps", ValueType::integer, "10", "uniform output grid intervals"},

        {"khasminskii.f", ValueType::string, "power_well", "power_well | constant"},
        {"khasminskii.c", ValueType::real, "1", "f scale"},
        {"khasminskii.gamma", ValueType::real, "0.3", "power_well exponent"},
        {"khasminskii.x0", ValueType::real, "0", "power_well centre"},
        {"khasminskii.p", ValueType::real, "4", "declared space exponent"},
        {"khasminskii.q", ValueType::real, "4", "declared time exponent"},
        {"khasminskii.const", ValueType::real, "0.5", "experiment: constant-f check value"},
        {"khasminskii.s", ValueType::real, "0", "interval start"},
        {"khasminskii.t", ValueType::real, "1", "interval end"},
        {"khasminskii.lambdas", ValueType::real_list, "0.1,0.2,0.3,0.5,1,1.5,2", "lambda grid (subcommand)"},
        {"khasminskii.small_lambdas", ValueType::real_list, "0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5",
         "experiment: small-lambda fit grid"},
        {"khasminskii.large_lambdas", ValueType::real_list, "1,1.25,1.5,1.75,2", "experiment: large-lambda fit grid"},
        {"khasminskii.N", ValueType::integer, "100000", "paths"},
        {"khasminskii.dt", ValueType::real, "1e-3", "path step"},

        {"experiment.s", ValueType::real, "", "initial width (per-experiment default)"},
        {"experiment.delta", ValueType::real, "", "translation between mu and nu"},
        {"experiment.t_lo", ValueType::real, "", "first sample time"},
        {"experiment.t_hi", ValueType::real, "", "last sample time"},
        {"experiment.samples_per_decade", ValueType::integer, "10", "log-spaced samples per decade"},
        {"experiment.fit_lo", ValueType::real, "", "slope fit range start"},
        {"experiment.fit_hi", ValueType::real, "", "slope fit range end"},
        {"experiment.k", ValueType::real, "", "norm index of the measured quantity"},
        {"experiment.headroom", ValueType::real, "3", "bounded-ratio tolerance"},
        {"experiment.slope_tolerance", ValueType::real, "", "override the asserted slope tolerance"},
        {"experiment.calibrate", ValueType::string, "", "first | last"},
        {"experiment.alphas", ValueType::real_list, "0.25,0.5,1,2", "Renyi orders"},
        {"experiment.alpha_limit", ValueType::real, "1e-3", "small alpha for the limit check"},
        {"experiment.picard_tol", ValueType::real, "1e-8", "Picard tolerance inside experiments"},
    };
    return schema;
}

inline const SchemaEntry* find_schema_entry(const std::string& key) {
    for (const auto& e : config_schema())
        if (e.key == key) return &e;
    return nullptr;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_real(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t == "inf" || t == "+inf") {
        out = kInf;
        return true;
    }
    if (t == "-inf") {
        out = -kInf;
        return true;
    }
    if (t.empty()) return false;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    return res.ec == std::errc() && res.ptr == t.data() + t.size() && !std::isnan(out);
}

inline bool parse_integer(const std::string& s, long long& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

inline bool parse_bool(const std::string& s, bool& out) {
    const std::string t = trim(s);
    if (t == "true" || t == "1") out = true;
    else if (t == "false" || t == "0") out = false;
    else return false;
    return true;
}

inline bool parse_real_list(const std::string& s, std::vector<double>& out) {
    out.clear();
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v;
        if (!parse_real(item, v)) return false;
        out.push_back(v);
    }
    return !out.empty();
}

inline bool type_ok(ValueType type, const std::string& raw) {
    double d;
    long long i;
    bool b;
    std::vector<double> l;
    switch (type) {
    case ValueType::real: return parse_real(raw, d);
    case ValueType::integer: return parse_integer(raw, i);
    case ValueType::boolean: return parse_bool(raw, b);
    case ValueType::real_list: return parse_real_list(raw, l);
    case ValueType::string: return true;
    }
    return false;
}

} // namespace detail

/// Fully resolved configuration: schema defaults, then the file, then
/// --set overrides. Remembers which keys were set explicitly.
class RunConfig {
public:
    RunConfig() {
        for (const auto& e : config_schema()) values_[e.key] = e.default_value;
    }

    /// Sets one key; unknown keys and type mismatches are rejected with the key path.
    void set(const std::string& key, const std::string& raw, const std::string& origin = "") {
        const auto* entry = find_schema_entry(key);
        const std::string where = origin.empty() ? "" : origin + ": ";
        require(entry != nullptr, ErrorKind::config_error, where + "unknown config key '" + key + "'");
        const std::string value = detail::trim(raw);
        require(detail::type_ok(entry->type, value), ErrorKind::config_error,
                where + "config key '" + key + "' expects " + to_string(entry->type) + ", got '" + value + "'");
        values_[key] = value;
        explicit_.insert_or_assign(key, true);
    }

    /// "key=value" as given to --set.
    void set_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        require(eq != std::string::npos, ErrorKind::config_error, "--set expects key=value, got '" + assignment + "'");
        set(detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1), "--set");
    }

    void merge_text(const std::string& text, const std::string& origin = "config") {
        boost::property_tree::ptree tree;
        std::istringstream in(text);
        try {
            boost::property_tree::ini_parser::read_ini(in, tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw Error(ErrorKind::config_error, origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
        }
        for (const auto& [section, node] : tree) {
            if (node.empty()) {
                set(section, node.data(), origin);
                continue;
            }
            for (const auto& [key, leaf] : node) {
                require(leaf.empty(), ErrorKind::config_error, origin + ": nested section under '" + section + "'");
                set(section + "." + key, leaf.data(), origin);
            }
        }
    }

    void merge_file(const std::filesystem::path& path) {
        std::string text;
        try {
            text = io::read_file(path);
        } catch (const Error& e) {
            throw Error(ErrorKind::config_error, e.message());
        }
        merge_text(text, path.string());
    }

    bool is_set(const std::string& key) const { return explicit_.count(key) != 0; }
    bool has_value(const std::string& key) const { return !raw(key).empty(); }

    const std::string& raw(const std::string& key) const {
        auto it = values_.find(key);
        require(it != values_.end(), ErrorKind::config_error, "unknown config key '" + key + "'");
        return it->second;
    }

    double real(const std::string& key) const {
        double v = 0.0;
        require(detail::parse_real(raw(key), v), ErrorKind::config_error, "config key '" + key + "' has no real value");
        return v;
    }
    long long integer(const std::string& key) const {
        long long v = 0;
        require(detail::parse_integer(raw(key), v), ErrorKind::config_error,
                "config key '" + key + "' has no integer value");
        return v;
    }
    std::string string(const std::string& key) const { return raw(key); }
    std::vector<double> real_list(const std::string& key) const {
        std::vector<double> v;
        require(detail::parse_real_list(raw(key), v), ErrorKind::config_error,
                "config key '" + key + "' has no list value");
        return v;
    }

    /// Range checks that need no computation. Throws config_error naming the key.
    void validate() const {
        auto need = [](bool ok, const std::string& key, const std::string& what) {
            require(ok, ErrorKind::config_error, "config key '" + key + "': " + what);
        };
        need(integer("schema_version") == kSchemaVersion, "schema_version",
             "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
        need(integer("seed") >= 0, "seed", "must be non-negative");
        need(integer("threads") >= 1, "threads", "must be at least 1");
        need(integer("grid.cells") >= 8, "grid.cells", "must be at least 8");
        need(real("grid.x_max") > real("grid.x_min"), "grid.x_max", "must exceed grid.x_min");
        need(real("diffusion.a") > 0.0, "diffusion.a", "must be positive");
        need(real("time.T") > 0.0, "time.T", "must be positive");
        need(real("time.dt_max") > 0.0, "time.dt_max", "must be positive");
        need(real("time.nodes_per_decade") > 0.0, "time.nodes_per_decade", "must be positive");
        need(real("time.t_min_fraction") > 0.0 && real("time.t_min_fraction") < 1.0, "time.t_min_fraction",
             "must lie in (0, 1)");
        need(integer("time.steps") >= 1, "time.steps", "must be at least 1");
        const auto refine = string("time.refine");
        need(refine == "geometric" || refine == "uniform", "time.refine", "must be geometric or uniform");
        const auto init = string("init.kind");
        need(init == "gaussian" || init == "point" || init == "file", "init.kind", "must be gaussian, point or file");
        need(real("init.sd") > 0.0, "init.sd", "must be positive");
        need(init != "file" || !string("init.file").empty(), "init.file", "required when init.kind = file");
        need(real("picard.tol") > 0.0, "picard.tol", "must be positive");
        need(integer("picard.max_iter") >= 2, "picard.max_iter", "must be at least 2");
        need(real("picard.lambda0") >= 0.0, "picard.lambda0", "must be non-negative");
        need(real("picard.ratio_limit") > 0.0 && real("picard.ratio_limit") < 1.0, "picard.ratio_limit",
             "must lie in (0, 1)");
        need(integer("picard.max_lambda_doublings") >= 0, "picard.max_lambda_doublings", "must be non-negative");
        need(real("picard.p") >= 1.0 && real("picard.p") <= real("picard.k"), "picard.p", "needs 1 <= p <= k");
        need(integer("particles.N") >= 1, "particles.N", "must be positive");
        need(real("particles.dt") > 0.0, "particles.dt", "must be positive");
        need(real("particles.bandwidth") >= 0.0, "particles.bandwidth", "must be non-negative");
        need(integer("particles.output_steps") >= 1, "particles.output_steps", "must be at least 1");
        need(integer("khasminskii.N") >= 2, "khasminskii.N", "must be at least 2");
        need(real("khasminskii.dt") > 0.0, "khasminskii.dt", "must be positive");
        need(real("khasminskii.t") > real("khasminskii.s") && real("khasminskii.s") >= 0.0, "khasminskii.t",
             "needs 0 <= s < t");
        for (double l : real_list("khasminskii.lambdas")) need(l > 0.0, "khasminskii.lambdas", "must be positive");
        const auto f = string("khasminskii.f");
        need(f == "power_well" || f == "constant", "khasminskii.f", "must be power_well or constant");
        need(integer("experiment.samples_per_decade") >= 1, "experiment.samples_per_decade", "must be at least 1");
        need(real("experiment.headroom") > 0.0, "experiment.headroom", "must be positive");
        need(real("experiment.picard_tol") > 0.0, "experiment.picard_tol", "must be positive");
        for (double a : real_list("experiment.alphas")) need(a > 0.0, "experiment.alphas", "must be positive");
        const auto cal = string("experiment.calibrate");
        need(cal.empty() || cal == "first" || cal == "last", "experiment.calibrate", "must be first or last");
    }

    /// Resolved configuration in the input format, sections in schema order.
    std::string dump() const {
        std::string out = "# resolved configuration\n";
        std::string current;
        std::vector<std::string> top;
        for (const auto& e : config_schema())
            if (e.key.find('.') == std::string::npos) out += e.key + " = " + values_.at(e.key) + "\n";
        for (const auto& e : config_schema()) {
            const auto dot = e.key.find('.');
            if (dot == std::string::npos) continue;
            const auto section = e.key.substr(0, dot);
            if (section != current) {
                out += "\n[" + section + "]\n";
                current = section;
            }
            out += e.key.substr(dot + 1) + " = " + values_.at(e.key) + "\n";
        }
        return out;
    }

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
};

/// File (optional) then overrides, validated.
inline RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
    RunConfig cfg;
    if (!path.empty()) cfg.merge_file(path);
    for (const auto& o : overrides) cfg.set_override(o);
    cfg.validate();
    return cfg;
}

} // namespace nemlab
