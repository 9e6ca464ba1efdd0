#pragma once

/**
 * @file model_io.hpp
 * @brief Portable JSON model documents ("dualcbf-model", version 1).
 *
 * {
 *   "format": "dualcbf-model",
 *   "format_version": 1,
 *   "widths": [n0, ..., 1],
 *   "activations": ["relu", ...],          one per hidden layer
 *   "weights": [[[row], ...], ...],        layer i: n_i rows of n_{i-1}
 *   "biases": [[...], ...],
 *   "metadata": {"name", "note", "alpha_gain", "dynamics", "input_bounds"}
 * }
 */

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dualcbf/error.hpp"
#include "dualcbf/network.hpp"

namespace dualcbf {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatTag = "dualcbf-model";

struct ModelMetadata {
    std::string name;
    std::string note;
    std::optional<double> alpha_gain;
    std::optional<std::string> dynamics;  ///< DynamicsId string, e.g. "vanderpol:mu=1"
    /// Box on the control input, one [lo, hi] pair per input.
    std::vector<std::pair<double, double>> input_bounds;

    bool operator==(const ModelMetadata&) const = default;
};

struct ModelFile {
    NetworkSpec net;
    ModelMetadata metadata;
};

namespace detail {

/// 1-based line and column of byte offset `pos` in `text`.
inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t pos) {
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < pos && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

inline const nlohmann::json& member(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ShapeError(std::string("missing field '") + key + "'");
    return *it;
}

inline double finite_number(const nlohmann::json& value, const std::string& where) {
    if (!value.is_number()) throw ShapeError(where + " is not a number");
    const double v = value.get<double>();
    if (!std::isfinite(v)) throw NonFiniteWeight(where + " is not finite");
    return v;
}

inline void append_number(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string text(buf, res.ptr);
    if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
    out += text;
}

}  // namespace detail

/// Parses and validates a model document.
inline ModelFile parse_model_file(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t pos = e.byte > 0 ? e.byte - 1 : 0;
        const auto [line, column] = detail::line_column(text, pos);
        throw SyntaxError("syntax error at line " + std::to_string(line) + ", column " + std::to_string(column) +
                              ": " + e.what(),
                          line, column);
    } catch (const nlohmann::json::out_of_range& e) {
        throw NonFiniteWeight(std::string("number out of range: ") + e.what());
    }
    if (!doc.is_object()) throw ShapeError("model document must be an object");

    if (auto it = doc.find("format"); it != doc.end() && *it != kModelFormatTag)
        throw ShapeError("unexpected format tag");
    const auto& version = detail::member(doc, "format_version");
    if (!version.is_number_integer() || version.get<int>() != kModelFormatVersion)
        throw ShapeError("unsupported format_version (expected " + std::to_string(kModelFormatVersion) + ")");

    const auto& jw = detail::member(doc, "widths");
    if (!jw.is_array() || jw.size() < 2) throw ShapeError("widths must list at least two layer sizes");
    std::vector<std::size_t> widths;
    for (const auto& w : jw) {
        if (!w.is_number_unsigned() || w.get<std::size_t>() == 0)
            throw ShapeError("widths must be positive integers");
        widths.push_back(w.get<std::size_t>());
    }
    if (widths.back() != 1) throw ShapeError("terminal width must be 1");
    const std::size_t depth = widths.size() - 1;

    std::vector<Activation> acts;
    if (auto it = doc.find("activations"); it != doc.end()) {
        if (!it->is_array()) throw ShapeError("activations must be an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& a = (*it)[i];
            if (!a.is_string()) throw ShapeError("activation " + std::to_string(i) + " is not a string");
            const auto kind = parse_activation(a.get<std::string>());
            if (!kind) throw UnknownActivation("unknown activation '" + a.get<std::string>() + "' for layer " +
                                               std::to_string(i + 1));
            acts.push_back(*kind);
        }
    }
    if (acts.size() != depth - 1)
        throw ShapeError("expected " + std::to_string(depth - 1) + " activations (one per hidden layer), got " +
                         std::to_string(acts.size()));

    const auto& jweights = detail::member(doc, "weights");
    const auto& jbiases = detail::member(doc, "biases");
    if (!jweights.is_array() || jweights.size() != depth)
        throw ShapeError("weights must hold " + std::to_string(depth) + " layers");
    if (!jbiases.is_array() || jbiases.size() != depth)
        throw ShapeError("biases must hold " + std::to_string(depth) + " layers");

    std::vector<std::vector<double>> weights(depth);
    std::vector<std::vector<double>> biases(depth);
    for (std::size_t i = 0; i < depth; ++i) {
        const std::string layer = "layer " + std::to_string(i + 1);
        const std::size_t rows = widths[i + 1];
        const std::size_t cols = widths[i];
        const auto& jl = jweights[i];
        if (!jl.is_array() || jl.size() != rows)
            throw ShapeError(layer + ": weights need " + std::to_string(rows) + " rows");
        weights[i].reserve(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto& row = jl[r];
            if (!row.is_array() || row.size() != cols)
                throw ShapeError(layer + ": weight row " + std::to_string(r) + " needs " + std::to_string(cols) +
                                 " entries");
            for (std::size_t c = 0; c < cols; ++c)
                weights[i].push_back(detail::finite_number(
                    row[c], layer + " weight (" + std::to_string(r) + ", " + std::to_string(c) + ")"));
        }
        const auto& jb = jbiases[i];
        if (!jb.is_array() || jb.size() != rows)
            throw ShapeError(layer + ": bias needs " + std::to_string(rows) + " entries");
        for (std::size_t r = 0; r < rows; ++r)
            biases[i].push_back(detail::finite_number(jb[r], layer + " bias " + std::to_string(r)));
    }

    ModelMetadata meta;
    if (auto it = doc.find("metadata"); it != doc.end()) {
        if (!it->is_object()) throw ShapeError("metadata must be an object");
        const auto& m = *it;
        if (auto f = m.find("name"); f != m.end() && f->is_string()) meta.name = f->get<std::string>();
        if (auto f = m.find("note"); f != m.end() && f->is_string()) meta.note = f->get<std::string>();
        if (auto f = m.find("alpha_gain"); f != m.end()) meta.alpha_gain = detail::finite_number(*f, "alpha_gain");
        if (auto f = m.find("dynamics"); f != m.end() && f->is_string()) meta.dynamics = f->get<std::string>();
        if (auto f = m.find("input_bounds"); f != m.end()) {
            if (!f->is_array()) throw ShapeError("input_bounds must be an array of [lo, hi] pairs");
            for (const auto& pair : *f) {
                if (!pair.is_array() || pair.size() != 2) throw ShapeError("input_bounds entries must be [lo, hi]");
                const double lo = detail::finite_number(pair[0], "input bound");
                const double hi = detail::finite_number(pair[1], "input bound");
                if (lo > hi) throw ShapeError("input bound has lo > hi");
                meta.input_bounds.emplace_back(lo, hi);
            }
        }
    }

    try {
        return {NetworkSpec::create(std::move(widths), std::move(weights), std::move(biases), std::move(acts)),
                std::move(meta)};
    } catch (const InvalidArchitecture& e) {
        throw ShapeError(e.what());
    }
}

inline NetworkSpec parse_model(const std::string& text) { return parse_model_file(text).net; }

inline ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model_file(buf.str());
}

/// Writes a model document. Numbers use the shortest decimal form that reads
/// back to the same double, so serialize/parse round-trips exactly.
inline std::string serialize_model(const NetworkSpec& net, const ModelMetadata& meta = {}) {
    std::string out = "{\n  \"format\": \"dualcbf-model\",\n  \"format_version\": 1,\n  \"widths\": [";
    for (std::size_t i = 0; i < net.widths().size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(net.widths()[i]);
    }
    out += "],\n  \"activations\": [";
    const auto acts = net.hidden_activations();
    for (std::size_t i = 0; i < acts.size(); ++i) {
        if (i) out += ", ";
        out += '"';
        out += name_of(acts[i]);
        out += '"';
    }
    out += "],\n  \"weights\": [\n";
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const auto& layer = net.layer(i);
        out += "    [\n";
        for (std::size_t r = 0; r < layer.rows; ++r) {
            out += "      [";
            for (std::size_t c = 0; c < layer.cols; ++c) {
                if (c) out += ", ";
                detail::append_number(out, layer.w(r, c));
            }
            out += r + 1 < layer.rows ? "],\n" : "]\n";
        }
        out += i + 1 < net.depth() ? "    ],\n" : "    ]\n";
    }
    out += "  ],\n  \"biases\": [\n";
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const auto& layer = net.layer(i);
        out += "    [";
        for (std::size_t r = 0; r < layer.rows; ++r) {
            if (r) out += ", ";
            detail::append_number(out, layer.bias[r]);
        }
        out += i + 1 < net.depth() ? "],\n" : "]\n";
    }
    out += "  ],\n  \"metadata\": {";
    std::vector<std::string> fields;
    if (!meta.name.empty()) fields.push_back("\"name\": " + nlohmann::json(meta.name).dump());
    if (!meta.note.empty()) fields.push_back("\"note\": " + nlohmann::json(meta.note).dump());
    if (meta.alpha_gain) {
        std::string s = "\"alpha_gain\": ";
        detail::append_number(s, *meta.alpha_gain);
        fields.push_back(s);
    }
    if (meta.dynamics) fields.push_back("\"dynamics\": " + nlohmann::json(*meta.dynamics).dump());
    if (!meta.input_bounds.empty()) {
        std::string s = "\"input_bounds\": [";
        for (std::size_t j = 0; j < meta.input_bounds.size(); ++j) {
            if (j) s += ", ";
            s += '[';
            detail::append_number(s, meta.input_bounds[j].first);
            s += ", ";
            detail::append_number(s, meta.input_bounds[j].second);
            s += ']';
        }
        s += ']';
        fields.push_back(s);
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        out += i ? ",\n    " : "\n    ";
        out += fields[i];
    }
    out += fields.empty() ? "}\n}\n" : "\n  }\n}\n";
    return out;
}

inline void save_model(const std::filesystem::path& path, const NetworkSpec& net, const ModelMetadata& meta = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file " + path.string());
    out << serialize_model(net, meta);
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace dualcbf
