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

// File formats:
//   GridDensity  CSV "x,value", one row per cell centre.
//   DensityFlow  directory with timegrid.csv ("index,t") and snapshot_NNNNN.csv per node.
// Every float is written with 17 significant digits.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "nemlab/density.hpp"
#include "nemlab/error.hpp"

namespace nemlab::io {

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Write to a sibling temporary, then rename over the target.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::io_error, "cannot open " + tmp.string() + " for writing");
        out << content;
        require(static_cast<bool>(out), ErrorKind::io_error, "write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io_error, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Minimal ordered JSON emitter (nlohmann's number formatting is shortest
// round-trip, not fixed 17 digits).

class Json {
public:
    using Array = std::vector<Json>;
    using Object = std::vector<std::pair<std::string, Json>>;

    Json() : value_(nullptr) {}
    Json(std::nullptr_t) : value_(nullptr) {}
    Json(bool b) : value_(b) {}
    Json(double d) : value_(d) {}
    Json(int i) : value_(static_cast<double>(i)) {}
    Json(long long i) : value_(static_cast<double>(i)) {}
    Json(std::size_t i) : value_(static_cast<double>(i)) {}
    Json(const char* s) : value_(std::string(s)) {}
    Json(std::string s) : value_(std::move(s)) {}
    Json(Array a) : value_(std::move(a)) {}
    Json(Object o) : value_(std::move(o)) {}

    static Json object() { return Json(Object{}); }
    static Json array() { return Json(Array{}); }

    template <class T>
    static Json array_of(const std::vector<T>& xs) {
        Array a;
        a.reserve(xs.size());
        for (const auto& x : xs) a.emplace_back(Json(static_cast<T>(x)));
        return Json(std::move(a));
    }

    Json& set(const std::string& key, Json v) {
        auto& obj = std::get<Object>(value_);
        for (auto& [k, existing] : obj)
            if (k == key) {
                existing = std::move(v);
                return *this;
            }
        obj.emplace_back(key, std::move(v));
        return *this;
    }

    void push(Json v) { std::get<Array>(value_).push_back(std::move(v)); }

    std::string dump(int indent = 2) const {
        std::string out;
        write(out, indent, 0);
        out += '\n';
        return out;
    }

private:
    static void escape(std::string& out, const std::string& s) {
        out += '"';
        for (char c : s) {
            switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
            }
        }
        out += '"';
    }

    void write(std::string& out, int indent, int depth) const {
        const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
        const std::string pad_end(static_cast<std::size_t>(indent * depth), ' ');
        if (std::holds_alternative<std::nullptr_t>(value_)) {
            out += "null";
        } else if (const bool* b = std::get_if<bool>(&value_)) {
            out += *b ? "true" : "false";
        } else if (const double* d = std::get_if<double>(&value_)) {
            // Non-finite values have no JSON literal; they are emitted as strings.
            if (std::isfinite(*d)) out += format_double(*d);
            else escape(out, format_double(*d));
        } else if (const std::string* s = std::get_if<std::string>(&value_)) {
            escape(out, *s);
        } else if (const Array* a = std::get_if<Array>(&value_)) {
            if (a->empty()) {
                out += "[]";
                return;
            }
            bool scalar = true;
            for (const auto& e : *a)
                if (std::holds_alternative<Array>(e.value_) || std::holds_alternative<Object>(e.value_)) scalar = false;
            out += '[';
            for (std::size_t i = 0; i < a->size(); ++i) {
                if (i) out += scalar ? ", " : ",";
                if (!scalar) out += "\n" + pad;
                (*a)[i].write(out, indent, depth + 1);
            }
            if (!scalar) out += "\n" + pad_end;
            out += ']';
        } else if (const Object* o = std::get_if<Object>(&value_)) {
            if (o->empty()) {
                out += "{}";
                return;
            }
            out += '{';
            for (std::size_t i = 0; i < o->size(); ++i) {
                if (i) out += ',';
                out += "\n" + pad;
                escape(out, (*o)[i].first);
                out += ": ";
                (*o)[i].second.write(out, indent, depth + 1);
            }
            out += "\n" + pad_end + '}';
        }
    }

    std::variant<std::nullptr_t, bool, double, std::string, Array, Object> value_;
};

// ---------------------------------------------------------------------------
// Densities and flows

inline std::string density_csv(const GridDensity& d) {
    std::string out = "x,value\n";
    for (std::size_t j = 0; j < d.values.size(); ++j)
        out += format_double(d.grid.center(j)) + "," + format_double(d.values[j]) + "\n";
    return out;
}

inline void write_density_csv(const std::filesystem::path& path, const GridDensity& d) {
    atomic_write(path, density_csv(d));
}

/// Reads "x,value" rows on uniformly spaced cell centres and rebuilds the grid.
inline GridDensity read_density_csv(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::invalid_data, path.string() + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "x,value", ErrorKind::invalid_data, path.string() + ": expected header 'x,value'");
    std::vector<double> xs, vs;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        require(comma != std::string::npos, ErrorKind::invalid_data,
                path.string() + ":" + std::to_string(row) + ": expected two columns");
        try {
            xs.push_back(std::stod(line.substr(0, comma)));
            vs.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw Error(ErrorKind::invalid_data, path.string() + ":" + std::to_string(row) + ": not a number");
        }
    }
    require(xs.size() >= Grid1D::kMinCells, ErrorKind::invalid_data, path.string() + ": too few rows for a grid");
    const double dx = (xs.back() - xs.front()) / static_cast<double>(xs.size() - 1);
    for (std::size_t j = 1; j < xs.size(); ++j)
        require(std::abs(xs[j] - xs[j - 1] - dx) <= 1e-9 * std::max(1.0, std::abs(dx)) + 1e-9 * std::abs(xs[j]),
                ErrorKind::invalid_data, path.string() + ": x column is not uniformly spaced");
    Grid1D grid(xs.front() - 0.5 * dx, xs.back() + 0.5 * dx, xs.size());
    return GridDensity(grid, std::move(vs));
}

inline std::string snapshot_name(std::size_t i) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "snapshot_%05zu.csv", i);
    return buf;
}

inline void write_flow_dir(const std::filesystem::path& dir, const DensityFlow& flow) {
    flow.check();
    std::filesystem::create_directories(dir);
    std::string manifest = "index,t\n";
    for (std::size_t i = 0; i < flow.time_grid.size(); ++i) {
        manifest += std::to_string(i) + "," + format_double(flow.time_grid[i]) + "\n";
        write_density_csv(dir / snapshot_name(i), flow.snapshots[i]);
    }
    atomic_write(dir / "timegrid.csv", manifest);
}

inline DensityFlow read_flow_dir(const std::filesystem::path& dir) {
    std::istringstream in(read_file(dir / "timegrid.csv"));
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "index,t", ErrorKind::invalid_data, "timegrid.csv: expected header 'index,t'");
    std::vector<double> nodes;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        require(comma != std::string::npos, ErrorKind::invalid_data, "timegrid.csv: malformed row");
        require(std::stoul(line.substr(0, comma)) == nodes.size(), ErrorKind::invalid_data,
                "timegrid.csv: indices must be 0..M in order");
        nodes.push_back(std::stod(line.substr(comma + 1)));
    }
    DensityFlow flow{TimeGrid::from_nodes(nodes), {}, false};
    for (std::size_t i = 0; i < nodes.size(); ++i) flow.snapshots.push_back(read_density_csv(dir / snapshot_name(i)));
    for (const auto& s : flow.snapshots) require_same_grid(s.grid, flow.snapshots.front().grid);
    return flow;
}

inline void write_positions_csv(const std::filesystem::path& path, const std::vector<double>& xs,
                                const std::vector<double>* log_weights = nullptr) {
    std::string out = log_weights ? "index,x,log_weight\n" : "index,x\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out += std::to_string(i) + "," + format_double(xs[i]);
        if (log_weights) out += "," + format_double((*log_weights)[i]);
        out += "\n";
    }
    atomic_write(path, out);
}

} // namespace nemlab::io
