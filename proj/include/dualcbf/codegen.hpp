#pragma once

/**
 * @file codegen.hpp
 * @brief Ahead-of-time emitter: NetworkSpec -> self-contained header with
 *        constant weight arrays and allocation-free dual / hyper-dual kernels.
 *
 * The emitted source is valid C99 and C++. It follows the library's arithmetic
 * order and buffer rotation exactly, so a float header agrees with the library
 * instantiated at float bit for bit (given the same libm and no FP contraction).
 *
 * Also here: the zero-allocation checker and a reference interpreter that
 * re-reads the emitted arrays and layer comments and runs them independently.
 */

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "dualcbf/dynamics.hpp"
#include "dualcbf/error.hpp"
#include "dualcbf/network.hpp"
#include "dualcbf/ulp.hpp"

namespace dualcbf {

inline constexpr int kCodegenFormatVersion = 1;

struct CodegenConfig {
    std::string symbol_prefix = "cbf";
    int scalar_width = 32;  ///< 32 (float) or 64 (double)
    int order = 1;          ///< 2 adds the hyper-dual kernels
    bool emit_constraint_assembler = true;
    std::optional<DynamicsId> include_dynamics;
};

struct Manifest {
    int format_version = kCodegenFormatVersion;
    std::string prefix;
    std::string scalar;
    int order = 1;
    std::size_t input_width = 0;
    std::size_t max_width = 0;
    /// Caller-supplied scratch scalars (3 or 5 times max_width).
    std::size_t scratch_scalars = 0;
    /// Real + dual state alive between layers (2 times max_width).
    std::size_t state_scalars = 0;
    std::size_t parameter_scalars = 0;
    std::vector<std::string> symbols;
    std::string digest;

    std::string to_json() const;
};

struct GeneratedUnit {
    std::string source;
    Manifest manifest;
};

/// FNV-1a, 64 bit, as 16 lowercase hex digits.
inline std::string fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string Manifest::to_json() const {
    std::ostringstream out;
    out << "{\n"
        << "  \"format_version\": " << format_version << ",\n"
        << "  \"prefix\": \"" << prefix << "\",\n"
        << "  \"scalar\": \"" << scalar << "\",\n"
        << "  \"order\": " << order << ",\n"
        << "  \"input_width\": " << input_width << ",\n"
        << "  \"max_width\": " << max_width << ",\n"
        << "  \"scratch_scalars\": " << scratch_scalars << ",\n"
        << "  \"state_scalars\": " << state_scalars << ",\n"
        << "  \"parameter_scalars\": " << parameter_scalars << ",\n"
        << "  \"symbols\": [";
    for (std::size_t i = 0; i < symbols.size(); ++i) out << (i ? ", " : "") << '"' << symbols[i] << '"';
    out << "],\n  \"digest\": \"fnv1a64:" << digest << "\"\n}\n";
    return out.str();
}

namespace detail {

inline bool is_reserved_word(const std::string& s) {
    static const std::set<std::string> words = {
        "alignas", "alignof", "and", "asm", "auto", "bool", "break", "case", "catch", "char", "class", "const",
        "constexpr", "continue", "default", "delete", "do", "double", "else", "enum", "explicit", "export",
        "extern", "false", "float", "for", "friend", "goto", "if", "inline", "int", "long", "mutable",
        "namespace", "new", "noexcept", "not", "nullptr", "operator", "or", "private", "protected", "public",
        "register", "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "template",
        "this", "throw", "true", "try", "typedef", "typename", "union", "unsigned", "using", "virtual", "void",
        "volatile", "while", "xor"};
    return words.count(s) > 0;
}

inline void validate_prefix(const std::string& prefix) {
    const bool ok = !prefix.empty() && (std::isalpha(static_cast<unsigned char>(prefix[0])) || prefix[0] == '_') &&
                    std::all_of(prefix.begin(), prefix.end(), [](char c) {
                        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
                    });
    if (!ok) throw InvalidIdentifier("'" + prefix + "' is not a valid identifier");
    if (is_reserved_word(prefix)) throw InvalidIdentifier("'" + prefix + "' is a reserved word");
    if (prefix.rfind("__", 0) == 0 || (prefix.size() > 1 && prefix[0] == '_' && std::isupper(static_cast<unsigned char>(prefix[1]))))
        throw InvalidIdentifier("'" + prefix + "' uses an implementation-reserved spelling");
}

inline std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

/// Shortest round-trip literal for the target scalar type.
inline std::string literal(double v, bool f32) {
    char buf[40];
    std::to_chars_result res;
    if (f32) {
        res = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
    } else {
        res = std::to_chars(buf, buf + sizeof buf, v);
    }
    std::string s(buf, res.ptr);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    if (f32) s += 'f';
    return s;
}

/// Emission helper: tracks the scalar type and math function spelling.
struct Emitter {
    std::ostringstream out;
    std::string p;   // prefix
    std::string P;   // upper-case prefix
    std::string real;
    bool f32 = true;
    std::vector<std::string> symbols;

    std::string lit(double v) const { return literal(v, f32); }
    std::string fn(const char* name) const { return f32 ? std::string(name) + "f" : std::string(name); }
    std::string buf(int k) const { return "b" + std::to_string(k); }
};

inline void emit_activation_helpers(Emitter& e, const std::set<Activation>& kinds) {
    const bool logistic = kinds.count(Activation::sigmoid) || kinds.count(Activation::softplus);
    if (logistic) {
        e.out << "static inline " << e.real << " " << e.p << "_logistic(" << e.real << " a)\n{\n"
              << "    " << e.real << " t;\n"
              << "    if (a >= " << e.lit(0) << ") return " << e.lit(1) << " / (" << e.lit(1) << " + " << e.fn("exp")
              << "(-a));\n"
              << "    t = " << e.fn("exp") << "(a);\n"
              << "    return t / (" << e.lit(1) << " + t);\n}\n\n";
    }
    if (kinds.count(Activation::softplus)) {
        e.out << "static inline " << e.real << " " << e.p << "_softplus(" << e.real << " a)\n{\n"
              << "    return (a > " << e.lit(0) << " ? a : " << e.lit(0) << ") + " << e.fn("log1p") << "("
              << e.fn("exp") << "(-" << e.fn("fabs") << "(a)));\n}\n\n";
    }
}

/// Statements computing s = σ(a) and d1 = σ'(a) for a smooth kind.
inline std::string value_and_slope(const Emitter& e, Activation kind) {
    switch (kind) {
        case Activation::tanh:
            return "s = " + e.fn("tanh") + "(a); d1 = " + e.lit(1) + " - s * s;";
        case Activation::sigmoid:
            return "s = " + e.p + "_logistic(a); d1 = s * (" + e.lit(1) + " - s);";
        case Activation::softplus:
            return "s = " + e.p + "_softplus(a); d1 = " + e.p + "_logistic(a);";
        case Activation::identity:
            return "s = a; d1 = " + e.lit(1) + ";";
        case Activation::relu: break;
    }
    return "";
}

inline std::string curvature(const Emitter& e, Activation kind) {
    switch (kind) {
        case Activation::tanh: return "d2 = -" + e.lit(2) + " * s * d1;";
        case Activation::sigmoid: return "d2 = d1 * (" + e.lit(1) + " - " + e.lit(2) + " * s);";
        case Activation::softplus: return "d2 = d1 * (" + e.lit(1) + " - d1);";
        default: return "d2 = " + e.lit(0) + ";";
    }
}

inline void emit_affine(Emitter& e, std::size_t layer, std::size_t rows, std::size_t cols, int in, int out) {
    e.out << "    for (j = 0; j < " << rows << "; ++j) {\n"
          << "        acc = " << e.p << "_B" << layer << "[j];\n"
          << "        for (k = 0; k < " << cols << "; ++k) acc += " << e.p << "_W" << layer << "[j][k] * " << e.buf(in)
          << "[k];\n"
          << "        " << e.buf(out) << "[j] = acc;\n    }\n";
}

inline void emit_project(Emitter& e, std::size_t layer, std::size_t rows, std::size_t cols, int in, int out) {
    e.out << "    for (j = 0; j < " << rows << "; ++j) {\n"
          << "        acc = " << e.p << "_W" << layer << "[j][0] * " << e.buf(in) << "[0];\n"
          << "        for (k = 1; k < " << cols << "; ++k) acc += " << e.p << "_W" << layer << "[j][k] * " << e.buf(in)
          << "[k];\n"
          << "        " << e.buf(out) << "[j] = acc;\n    }\n";
}

inline void emit_dual_kernel(Emitter& e, const NetworkSpec& net, bool assembler) {
    const std::string name = e.p + "_dual_pass";
    e.out << "/* (h, grad h . v) with v read at stride vstride. */\n"
          << "static inline void " << name << "(const " << e.real << " *x, const " << e.real
          << " *v, int vstride, " << e.real << " *h, " << e.real << " *lie, " << e.real << " *scratch)\n{\n"
          << "    " << e.real << " *b0 = scratch;\n"
          << "    " << e.real << " *b1 = scratch + " << e.P << "_MAX_WIDTH;\n"
          << "    " << e.real << " *b2 = scratch + 2 * " << e.P << "_MAX_WIDTH;\n"
          << "    " << e.real << " acc, a, s, d1;\n"
          << "    int j, k;\n"
          << "    (void)a; (void)s; (void)d1;\n"
          << "    for (k = 0; k < " << net.input_width() << "; ++k) {\n"
          << "        b0[k] = x[k];\n        b1[k] = v[k * vstride];\n    }\n";
    int real = 0;
    int tangent = 1;
    int stage = 2;
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const auto& layer = net.layer(i);
        const std::size_t id = i + 1;
        e.out << "    /* layer " << id << " */\n";
        emit_affine(e, id, layer.rows, layer.cols, real, stage);
        emit_project(e, id, layer.rows, layer.cols, tangent, real);
        if (layer.activation) {
            const Activation kind = *layer.activation;
            e.out << "    for (j = 0; j < " << layer.rows << "; ++j) {\n";
            if (kind == Activation::relu) {
                e.out << "        if (" << e.buf(stage) << "[j] > " << e.lit(0) << ") {\n"
                      << "            " << e.buf(tangent) << "[j] = " << e.buf(real) << "[j];\n"
                      << "        } else {\n"
                      << "            " << e.buf(stage) << "[j] = " << e.lit(0) << ";\n"
                      << "            " << e.buf(tangent) << "[j] = " << e.lit(0) << ";\n        }\n";
            } else {
                e.out << "        a = " << e.buf(stage) << "[j];\n"
                      << "        " << value_and_slope(e, kind) << "\n"
                      << "        " << e.buf(tangent) << "[j] = d1 * " << e.buf(real) << "[j];\n"
                      << "        " << e.buf(stage) << "[j] = s;\n";
            }
            e.out << "    }\n";
        } else {
            std::swap(real, tangent);
        }
        std::swap(real, stage);
    }
    e.out << "    *h = " << e.buf(real) << "[0];\n"
          << "    *lie = " << e.buf(tangent) << "[0];\n}\n\n";

    e.out << "/* Dual evaluation: h(x) and the Lie derivative along v. */\n"
          << "static inline void " << e.p << "_dual_eval(const " << e.real << " *x, const " << e.real << " *v, "
          << e.real << " *h, " << e.real << " *lie, " << e.real << " *scratch)\n{\n"
          << "    " << name << "(x, v, 1, h, lie, scratch ? scratch : " << e.p << "_scratch);\n}\n\n";
    e.symbols.push_back(e.p + "_dual_eval");

    if (assembler) {
        e.out << "/* Drift pass plus one pass per column of G (row-major n x m). LG has m entries. */\n"
              << "static inline void " << e.p << "_assemble(const " << e.real << " *x, const " << e.real
              << " *f, const " << e.real << " *G, int m, " << e.real << " *h, " << e.real << " *Lf, " << e.real
              << " *LG, " << e.real << " *scratch)\n{\n"
              << "    " << e.real << " hj;\n"
              << "    int j;\n"
              << "    if (!scratch) scratch = " << e.p << "_scratch;\n"
              << "    " << name << "(x, f, 1, h, Lf, scratch);\n"
              << "    for (j = 0; j < m; ++j) " << name << "(x, G + j, m, &hj, &LG[j], scratch);\n}\n\n";
        e.symbols.push_back(e.p + "_assemble");
    }
}

inline void emit_hyper_kernel(Emitter& e, const NetworkSpec& net, bool assembler) {
    const std::size_t n = net.input_width();
    const std::string name = e.p + "_hyper_pass";
    e.out << "/* Hyper-dual pass on x + v e1 + w e2 + u e12. v, w are read at the given strides.\n"
          << "   With J non-null, u = J w (J row-major n x n); otherwise u is read directly. */\n"
          << "static inline void " << name << "(const " << e.real << " *x, const " << e.real
          << " *v, int vstride, const " << e.real << " *w, int wstride, const " << e.real << " *J, const "
          << e.real << " *u, " << e.real << " *out, " << e.real << " *scratch)\n{\n";
    for (int k = 0; k < 5; ++k)
        e.out << "    " << e.real << " *b" << k << " = scratch" << (k ? " + " + std::to_string(k) + " * " + e.P + "_MAX_WIDTH" : "")
              << ";\n";
    e.out << "    " << e.real << " acc, a, s, d1, d2, pb, pc;\n"
          << "    int j, k;\n"
          << "    (void)a; (void)s; (void)d1; (void)d2; (void)pb; (void)pc;\n"
          << "    for (k = 0; k < " << n << "; ++k) {\n"
          << "        b0[k] = x[k];\n        b1[k] = v[k * vstride];\n        b2[k] = w[k * wstride];\n"
          << "        if (J) {\n"
          << "            acc = " << e.lit(0) << ";\n"
          << "            for (j = 0; j < " << n << "; ++j) acc += J[k * " << n << " + j] * w[j * wstride];\n"
          << "            b3[k] = acc;\n"
          << "        } else {\n            b3[k] = u[k];\n        }\n    }\n";
    int real = 0, c1 = 1, c2 = 2, c12 = 3, stage = 4;
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const auto& layer = net.layer(i);
        const std::size_t id = i + 1;
        e.out << "    /* layer " << id << " */\n";
        emit_affine(e, id, layer.rows, layer.cols, real, stage);
        emit_project(e, id, layer.rows, layer.cols, c1, real);
        emit_project(e, id, layer.rows, layer.cols, c2, c1);
        emit_project(e, id, layer.rows, layer.cols, c12, c2);
        const int p1 = real, p2 = c1, p12 = c2, freed = c12;
        if (layer.activation) {
            const Activation kind = *layer.activation;
            e.out << "    for (j = 0; j < " << layer.rows << "; ++j) {\n"
                  << "        a = " << e.buf(stage) << "[j];\n"
                  << "        " << value_and_slope(e, kind) << "\n"
                  << "        " << curvature(e, kind) << "\n"
                  << "        pb = " << e.buf(p1) << "[j];\n"
                  << "        pc = " << e.buf(p2) << "[j];\n"
                  << "        " << e.buf(p1) << "[j] = d1 * pb;\n"
                  << "        " << e.buf(p2) << "[j] = d1 * pc;\n"
                  << "        " << e.buf(p12) << "[j] = d2 * pb * pc + d1 * " << e.buf(p12) << "[j];\n"
                  << "        " << e.buf(stage) << "[j] = s;\n    }\n";
        }
        real = stage;
        c1 = p1;
        c2 = p2;
        c12 = p12;
        stage = freed;
    }
    e.out << "    out[0] = " << e.buf(real) << "[0];\n"
          << "    out[1] = " << e.buf(c1) << "[0];\n"
          << "    out[2] = " << e.buf(c2) << "[0];\n"
          << "    out[3] = " << e.buf(c12) << "[0];\n}\n\n";

    e.out << "/* out = (h, grad h . v, grad h . w, v' Hess h w + grad h . u). */\n"
          << "static inline void " << e.p << "_hyper_eval(const " << e.real << " *x, const " << e.real << " *v, const "
          << e.real << " *w, const " << e.real << " *u, " << e.real << " *out, " << e.real << " *scratch)\n{\n"
          << "    " << name << "(x, v, 1, w, 1, 0, u, out, scratch ? scratch : " << e.p << "_scratch);\n}\n\n";
    e.symbols.push_back(e.p + "_hyper_eval");
    if (!assembler) return;

    e.out << "/* Second-order terms from seeds x_{f,f} and x_{f,G_j}. J = f'(x), row-major n x n.\n"
          << "   h, Lf from the drift seed; LG, LGLf from the input seeds. */\n"
          << "static inline void " << e.p << "_assemble2(const " << e.real << " *x, const " << e.real
          << " *f, const " << e.real << " *G, int m, const " << e.real << " *J, " << e.real << " *h, " << e.real
          << " *Lf, " << e.real << " *LG, " << e.real << " *Lf2, " << e.real << " *LGLf, " << e.real
          << " *scratch)\n{\n"
          << "    " << e.real << " out[4];\n"
          << "    int j;\n"
          << "    if (!scratch) scratch = " << e.p << "_scratch;\n"
          << "    " << name << "(x, f, 1, f, 1, J, 0, out, scratch);\n"
          << "    *h = out[0];\n    *Lf = out[1];\n    *Lf2 = out[3];\n"
          << "    for (j = 0; j < m; ++j) {\n"
          << "        " << name << "(x, f, 1, G + j, m, J, 0, out, scratch);\n"
          << "        LG[j] = out[2];\n        LGLf[j] = out[3];\n    }\n}\n\n";
    e.symbols.push_back(e.p + "_assemble2");
}

inline void emit_dynamics(Emitter& e, const DynamicsId& id, int order) {
    const DynamicsModel model = make_dynamics(id);
    const std::size_t n = model.n;
    const std::size_t m = model.m;
    e.out << "/* " << to_string(id) << ": f (n), G (row-major n x m), J = f' (row-major n x n, may be null). */\n"
          << "static inline void " << e.p << "_dynamics(const " << e.real << " *x, " << e.real << " *f, " << e.real
          << " *G, " << e.real << " *J)\n{\n";
    switch (id.kind) {
        case SystemKind::bicycle:
            e.out << "    " << e.real << " c = " << e.fn("cos") << "(x[2]);\n"
                  << "    " << e.real << " s = " << e.fn("sin") << "(x[2]);\n"
                  << "    f[0] = x[3] * c;\n    f[1] = x[3] * s;\n    f[2] = " << e.lit(0) << ";\n    f[3] = "
                  << e.lit(0) << ";\n";
            for (int k = 0; k < 8; ++k) {
                if (k == 5) {
                    e.out << "    G[5] = x[3] / " << e.lit(id.wheelbase) << ";\n";
                } else {
                    e.out << "    G[" << k << "] = " << e.lit(k == 6 ? 1.0 : 0.0) << ";\n";
                }
            }
            e.out << "    if (J) {\n"
                  << "        int k;\n"
                  << "        for (k = 0; k < 16; ++k) J[k] = " << e.lit(0) << ";\n"
                  << "        J[2] = -x[3] * s;\n        J[3] = c;\n        J[6] = x[3] * c;\n        J[7] = s;\n    }\n";
            break;
        case SystemKind::vanderpol:
            e.out << "    f[0] = x[1];\n"
                  << "    f[1] = " << e.lit(id.mu) << " * (" << e.lit(1) << " - x[0] * x[0]) * x[1] - x[0];\n"
                  << "    G[0] = " << e.lit(0) << ";\n    G[1] = " << e.lit(1) << ";\n"
                  << "    if (J) {\n"
                  << "        J[0] = " << e.lit(0) << ";\n        J[1] = " << e.lit(1) << ";\n"
                  << "        J[2] = -" << e.lit(2) << " * " << e.lit(id.mu) << " * x[0] * x[1] - " << e.lit(1) << ";\n"
                  << "        J[3] = " << e.lit(id.mu) << " * (" << e.lit(1) << " - x[0] * x[0]);\n    }\n";
            break;
        case SystemKind::pendulum: {
            const double gl = id.gravity / id.length;
            const double b = 1.0 / (id.mass * id.length * id.length);
            e.out << "    f[0] = x[1];\n"
                  << "    f[1] = " << e.lit(gl) << " * " << e.fn("sin") << "(x[0]);\n"
                  << "    G[0] = " << e.lit(0) << ";\n    G[1] = " << e.lit(b) << ";\n"
                  << "    if (J) {\n"
                  << "        J[0] = " << e.lit(0) << ";\n        J[1] = " << e.lit(1) << ";\n"
                  << "        J[2] = " << e.lit(gl) << " * " << e.fn("cos") << "(x[0]);\n"
                  << "        J[3] = " << e.lit(0) << ";\n    }\n";
            break;
        }
    }
    e.out << "}\n\n";
    e.symbols.push_back(e.p + "_dynamics");

    e.out << "/* Evaluates the dynamics at x and assembles (h, Lf, LG). */\n"
          << "static inline void " << e.p << "_constraint(const " << e.real << " *x, " << e.real << " *h, " << e.real
          << " *Lf, " << e.real << " *LG, " << e.real << " *scratch)\n{\n"
          << "    " << e.real << " f[" << e.P << "_N0];\n"
          << "    " << e.real << " G[" << e.P << "_N0 * " << e.P << "_M];\n"
          << "    " << e.p << "_dynamics(x, f, G, 0);\n"
          << "    " << e.p << "_assemble(x, f, G, " << e.P << "_M, h, Lf, LG, scratch);\n}\n\n";
    e.symbols.push_back(e.p + "_constraint");
    if (order == 2) {
        e.out << "/* Evaluates the dynamics and Jacobian at x and assembles the second-order terms. */\n"
              << "static inline void " << e.p << "_constraint2(const " << e.real << " *x, " << e.real << " *h, "
              << e.real << " *Lf, " << e.real << " *LG, " << e.real << " *Lf2, " << e.real << " *LGLf, " << e.real
              << " *scratch)\n{\n"
              << "    " << e.real << " f[" << e.P << "_N0];\n"
              << "    " << e.real << " G[" << e.P << "_N0 * " << e.P << "_M];\n"
              << "    " << e.real << " J[" << e.P << "_N0 * " << e.P << "_N0];\n"
              << "    " << e.p << "_dynamics(x, f, G, J);\n"
              << "    " << e.p << "_assemble2(x, f, G, " << e.P << "_M, J, h, Lf, LG, Lf2, LGLf, scratch);\n}\n\n";
        e.symbols.push_back(e.p + "_constraint2");
    }
    (void)n;
    (void)m;
}

}  // namespace detail

/// Emits the header for `net`. Pure: equal inputs give byte-identical output.
inline GeneratedUnit emit(const NetworkSpec& net, const CodegenConfig& cfg) {
    detail::validate_prefix(cfg.symbol_prefix);
    if (cfg.scalar_width != 32 && cfg.scalar_width != 64)
        throw InvalidParameter("scalar width must be 32 or 64");
    if (cfg.order != 1 && cfg.order != 2) throw InvalidParameter("order must be 1 or 2");
    if (cfg.order == 2 && !net.is_smooth())
        throw NonSmoothActivation("order 2 code needs twice differentiable activations (ReLU is not)");
    std::optional<DynamicsModel> dyn;
    if (cfg.include_dynamics) {
        dyn = make_dynamics(*cfg.include_dynamics);
        if (dyn->n != net.input_width())
            throw DimensionMismatch(dyn->name + " state dimension does not match the network input width");
    }

    detail::Emitter e;
    e.p = cfg.symbol_prefix;
    e.P = detail::upper(cfg.symbol_prefix);
    e.f32 = cfg.scalar_width == 32;
    e.real = e.p + "_real";

    std::set<Activation> kinds;
    for (Activation a : net.hidden_activations()) kinds.insert(a);
    const bool needs_math = std::any_of(kinds.begin(), kinds.end(),
                                        [](Activation a) { return a != Activation::relu && a != Activation::identity; }) ||
                            (dyn && dyn->name != "vanderpol");
    const std::size_t width = net.buffer_width();
    const std::size_t scratch = (cfg.order == 2 ? 5 : 3) * width;

    Manifest man;
    man.prefix = e.p;
    man.scalar = e.f32 ? "float" : "double";
    man.order = cfg.order;
    man.input_width = net.input_width();
    man.max_width = width;
    man.scratch_scalars = scratch;
    man.state_scalars = 2 * width;
    man.parameter_scalars = net.parameter_count();

    const std::string guard = e.P + "_GENERATED_H";
    e.out << "/* Generated by dualcbf (format " << kCodegenFormatVersion << "). Do not edit.\n"
          << "   widths";
    for (std::size_t w : net.widths()) e.out << ' ' << w;
    e.out << ", " << man.scalar << ", order " << cfg.order << ".\n"
          << "   Pass a scratch buffer of " << e.P << "_SCRATCH scalars to make the calls reentrant;\n"
          << "   a null scratch uses the single static buffer below. */\n"
          << "#ifndef " << guard << "\n#define " << guard << "\n\n";
    if (needs_math) e.out << "#include <math.h>\n\n";
    e.out << "typedef " << man.scalar << " " << e.real << ";\n\n";
    e.out << "enum {\n"
          << "    " << e.P << "_N0 = " << net.input_width() << ",\n"
          << "    " << e.P << "_DEPTH = " << net.depth() << ",\n"
          << "    " << e.P << "_MAX_WIDTH = " << width << ",\n"
          << "    " << e.P << "_SCRATCH = " << scratch << ",\n";
    if (dyn) e.out << "    " << e.P << "_M = " << dyn->m << ",\n";
    e.out << "    " << e.P << "_ORDER = " << cfg.order << "\n};\n\n";

    for (std::size_t i = 0; i < net.depth(); ++i) {
        const auto& layer = net.layer(i);
        const std::size_t id = i + 1;
        e.out << "/* layer " << id << ": " << layer.cols << " -> " << layer.rows << ", "
              << (layer.activation ? std::string(name_of(*layer.activation)) : std::string("affine")) << " */\n"
              << "static const " << e.real << " " << e.p << "_W" << id << "[" << layer.rows << "][" << layer.cols
              << "] = {\n";
        for (std::size_t r = 0; r < layer.rows; ++r) {
            e.out << "    {";
            for (std::size_t c = 0; c < layer.cols; ++c) e.out << (c ? ", " : "") << e.lit(layer.w(r, c));
            e.out << (r + 1 < layer.rows ? "},\n" : "}\n");
        }
        e.out << "};\nstatic const " << e.real << " " << e.p << "_B" << id << "[" << layer.rows << "] = {";
        for (std::size_t r = 0; r < layer.rows; ++r) e.out << (r ? ", " : "") << e.lit(layer.bias[r]);
        e.out << "};\n\n";
    }
    e.out << "static " << e.real << " " << e.p << "_scratch[" << e.P << "_SCRATCH];\n\n";

    detail::emit_activation_helpers(e, kinds);
    const bool assembler = cfg.emit_constraint_assembler || dyn.has_value();
    detail::emit_dual_kernel(e, net, assembler);
    if (cfg.order == 2) detail::emit_hyper_kernel(e, net, assembler);
    if (dyn) detail::emit_dynamics(e, *cfg.include_dynamics, cfg.order);
    e.out << "#endif /* " << guard << " */\n";

    GeneratedUnit unit;
    unit.source = e.out.str();
    man.symbols = e.symbols;
    man.digest = fnv1a64(unit.source);
    unit.manifest = std::move(man);
    return unit;
}

// ---------------------------------------------------------------------------
// Zero-allocation check
// ---------------------------------------------------------------------------

struct Violation {
    std::size_t line = 0;
    std::string kind;  ///< "allocation", "io", "include", "recursion", "vla"
    std::string detail;
};

struct ZeroAllocReport {
    std::vector<Violation> violations;
    bool passed() const { return violations.empty(); }
};

namespace detail {

/// Copy of `src` with comments and string/char literals blanked (newlines kept).
inline std::string strip_comments(const std::string& src) {
    std::string out = src;
    enum { code, line_comment, block_comment, str, chr } state = code;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const char c = src[i];
        const char next = i + 1 < src.size() ? src[i + 1] : '\0';
        switch (state) {
            case code:
                if (c == '/' && next == '/') {
                    state = line_comment;
                    out[i] = ' ';
                } else if (c == '/' && next == '*') {
                    state = block_comment;
                    out[i] = out[i + 1] = ' ';
                    ++i;
                } else if (c == '"') {
                    state = str;
                } else if (c == '\'') {
                    state = chr;
                }
                break;
            case line_comment:
                if (c == '\n') state = code;
                else out[i] = ' ';
                break;
            case block_comment:
                if (c == '*' && next == '/') {
                    out[i] = out[i + 1] = ' ';
                    ++i;
                    state = code;
                } else if (c != '\n') {
                    out[i] = ' ';
                }
                break;
            case str:
            case chr:
                if (c == '\\') {
                    out[i] = ' ';
                    if (i + 1 < out.size()) out[++i] = ' ';
                } else if ((state == str && c == '"') || (state == chr && c == '\'')) {
                    state = code;
                } else if (c != '\n') {
                    out[i] = ' ';
                }
                break;
        }
    }
    return out;
}

inline std::size_t line_of(const std::string& text, std::size_t pos) {
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

}  // namespace detail

/// Scans `source` for dynamic allocation, I/O, non-math includes,
/// self-recursion and arrays whose extent is not a compile-time constant.
inline ZeroAllocReport check_zero_alloc(const std::string& source) {
    ZeroAllocReport report;
    const std::string code = detail::strip_comments(source);

    static const std::map<std::string, std::string> denylist = {
        {"malloc", "allocation"}, {"calloc", "allocation"}, {"realloc", "allocation"}, {"free", "allocation"},
        {"alloca", "allocation"}, {"new", "allocation"},    {"delete", "allocation"},  {"vector", "allocation"},
        {"make_unique", "allocation"}, {"make_shared", "allocation"}, {"printf", "io"}, {"fprintf", "io"},
        {"puts", "io"}, {"fopen", "io"}, {"cout", "io"}, {"cerr", "io"}, {"iostream", "io"}, {"cstdio", "io"}};

    // Includes other than math headers.
    static const std::regex include_re(R"(#\s*include\s*[<"]([^>"]+)[>"])");
    static const std::set<std::string> allowed_headers = {"math.h", "cmath", "stdint.h", "cstdint", "stddef.h",
                                                          "cstddef"};
    // Include lines come from the raw source: the header name is blanked in `code` when quoted.
    for (auto it = std::sregex_iterator(source.begin(), source.end(), include_re); it != std::sregex_iterator(); ++it) {
        const std::string header = (*it)[1].str();
        const std::size_t pos = static_cast<std::size_t>(it->position(0));
        if (code.compare(pos, 1, "#") != 0) continue;  // inside a comment
        if (!allowed_headers.count(header))
            report.violations.push_back({detail::line_of(source, pos), "include", header});
    }

    static const std::regex ident_re(R"([A-Za-z_][A-Za-z0-9_]*)");
    std::set<std::string> constants;
    for (auto it = std::sregex_iterator(code.begin(), code.end(), ident_re); it != std::sregex_iterator(); ++it) {
        const std::string word = it->str();
        const std::size_t pos = static_cast<std::size_t>(it->position(0));
        if (auto d = denylist.find(word); d != denylist.end()) {
            // Skip header names already reported as includes.
            const std::size_t bol = code.rfind('\n', pos) == std::string::npos ? 0 : code.rfind('\n', pos) + 1;
            if (code.compare(bol, 1, "#") == 0 && code.find("include", bol) < pos) continue;
            report.violations.push_back({detail::line_of(code, pos), d->second, word});
        }
    }

    // Compile-time constants: enumerators and #define names.
    static const std::regex enum_re(R"(enum\s*[A-Za-z_0-9]*\s*\{([^}]*)\})");
    for (auto it = std::sregex_iterator(code.begin(), code.end(), enum_re); it != std::sregex_iterator(); ++it) {
        const std::string body = (*it)[1].str();
        static const std::regex enumerator_re(R"(([A-Za-z_][A-Za-z0-9_]*)\s*(=|,|$))");
        for (auto e = std::sregex_iterator(body.begin(), body.end(), enumerator_re); e != std::sregex_iterator(); ++e)
            constants.insert((*e)[1].str());
    }
    static const std::regex define_re(R"(#\s*define\s+([A-Za-z_][A-Za-z0-9_]*))");
    for (auto it = std::sregex_iterator(code.begin(), code.end(), define_re); it != std::sregex_iterator(); ++it)
        constants.insert((*it)[1].str());

    // Array extents.
    static const std::regex array_re(R"(\b[A-Za-z_][A-Za-z0-9_]*\s*((\[[^\]]*\])+)\s*(=|;))");
    static const std::regex decl_prefix_re(
        R"((^|[;{}(,])\s*(static\s+)?(const\s+)?(unsigned\s+|signed\s+)?[A-Za-z_][A-Za-z0-9_]*\s+$)");
    for (auto it = std::sregex_iterator(code.begin(), code.end(), array_re); it != std::sregex_iterator(); ++it) {
        const std::size_t pos = static_cast<std::size_t>(it->position(0));
        // Only declarations: the identifier must follow a type name.
        const std::size_t from = pos >= 120 ? pos - 120 : 0;
        const std::string before = code.substr(from, pos - from);
        std::smatch decl;
        if (!std::regex_search(before, decl, decl_prefix_re)) continue;
        static const std::regex keyword_re(R"(\b(return|else|case|goto|sizeof)\s+$)");
        if (std::regex_search(before, keyword_re)) continue;
        const std::string extents = (*it)[1].str();
        static const std::regex extent_re(R"(\[([^\]]*)\])");
        for (auto x = std::sregex_iterator(extents.begin(), extents.end(), extent_re); x != std::sregex_iterator(); ++x) {
            const std::string ext = (*x)[1].str();
            for (auto id = std::sregex_iterator(ext.begin(), ext.end(), ident_re); id != std::sregex_iterator(); ++id) {
                if (!constants.count(id->str())) {
                    report.violations.push_back(
                        {detail::line_of(code, pos), "vla", "extent '" + ext + "' is not a compile-time constant"});
                    break;
                }
            }
        }
    }

    // Self-recursion: a function body that names its own function.
    static const std::regex fn_re(R"(\b([A-Za-z_][A-Za-z0-9_]*)\s*\([^;{}]*\)\s*\{)");
    for (auto it = std::sregex_iterator(code.begin(), code.end(), fn_re); it != std::sregex_iterator(); ++it) {
        const std::string name = (*it)[1].str();
        if (name == "if" || name == "for" || name == "while" || name == "switch") continue;
        std::size_t open = static_cast<std::size_t>(it->position(0) + it->length(0)) - 1;
        int depth = 0;
        std::size_t close = open;
        for (; close < code.size(); ++close) {
            if (code[close] == '{') ++depth;
            if (code[close] == '}' && --depth == 0) break;
        }
        const std::string body = code.substr(open + 1, close > open ? close - open - 1 : 0);
        const std::regex call_re("\\b" + name + "\\s*\\(");
        std::smatch m;
        if (std::regex_search(body, m, call_re))
            report.violations.push_back({detail::line_of(code, open + 1 + static_cast<std::size_t>(m.position(0))),
                                         "recursion", name + " calls itself"});
    }
    std::sort(report.violations.begin(), report.violations.end(),
              [](const Violation& a, const Violation& b) { return a.line < b.line; });
    return report;
}

inline ZeroAllocReport check_zero_alloc(const GeneratedUnit& unit) { return check_zero_alloc(unit.source); }

// ---------------------------------------------------------------------------
// Reference interpreter
// ---------------------------------------------------------------------------

/// Layers recovered from emitted source.
template <class T>
struct InterpretedLayer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::optional<Activation> activation;
    std::vector<T> w;  ///< row-major
    std::vector<T> b;
};

namespace detail {

template <class T>
std::vector<T> parse_literals(const std::string& text) {
    std::vector<T> out;
    static const std::regex num_re(R"([-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?f?)");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), num_re); it != std::sregex_iterator(); ++it) {
        std::string s = it->str();
        if (s.back() == 'f') s.pop_back();
        const char* begin = s.c_str() + (s[0] == '+' ? 1 : 0);
        T v{};
        std::from_chars(begin, s.c_str() + s.size(), v);
        out.push_back(v);
    }
    return out;
}

}  // namespace detail

/// Re-reads the layer comments and weight arrays of an emitted unit.
template <class T>
std::vector<InterpretedLayer<T>> interpret_layers(const GeneratedUnit& unit) {
    const std::string& src = unit.source;
    const std::string& p = unit.manifest.prefix;
    std::vector<InterpretedLayer<T>> layers;
    static const std::regex comment_re(R"(/\* layer (\d+): (\d+) -> (\d+), ([a-z]+) \*/)");
    for (auto it = std::sregex_iterator(src.begin(), src.end(), comment_re); it != std::sregex_iterator(); ++it) {
        InterpretedLayer<T> layer;
        const std::string id = (*it)[1].str();
        layer.cols = std::stoul((*it)[2].str());
        layer.rows = std::stoul((*it)[3].str());
        const std::string act = (*it)[4].str();
        if (act != "affine") {
            const auto kind = parse_activation(act);
            if (!kind) throw UnknownActivation("interpreter: unknown activation " + act);
            layer.activation = *kind;
        }
        const std::string wdecl = p + "_W" + id + "[";
        const std::string bdecl = p + "_B" + id + "[";
        const std::size_t wpos = src.find(wdecl, static_cast<std::size_t>(it->position(0)));
        const std::size_t bpos = src.find(bdecl, static_cast<std::size_t>(it->position(0)));
        if (wpos == std::string::npos || bpos == std::string::npos)
            throw ShapeError("interpreter: arrays of layer " + id + " not found");
        const std::size_t wopen = src.find('{', wpos);
        const std::size_t wclose = src.find("};", wopen);
        const std::size_t bopen = src.find('{', bpos);
        const std::size_t bclose = src.find("};", bopen);
        layer.w = detail::parse_literals<T>(src.substr(wopen, wclose - wopen));
        layer.b = detail::parse_literals<T>(src.substr(bopen, bclose - bopen));
        if (layer.w.size() != layer.rows * layer.cols || layer.b.size() != layer.rows)
            throw ShapeError("interpreter: layer " + id + " arrays do not match the declared shape");
        layers.push_back(std::move(layer));
    }
    if (layers.empty()) throw ShapeError("interpreter: no layers found");
    return layers;
}

/// Executes the emitted dual schedule on recovered layers: affine rows start
/// from the bias, projections from the first product, ReLU gates on the real part.
template <class T>
Dual<T> interpret_dual(const std::vector<InterpretedLayer<T>>& layers, const std::vector<T>& x,
                       const std::vector<T>& v) {
    std::vector<T> real = x;
    std::vector<T> tangent = v;
    for (const auto& layer : layers) {
        std::vector<T> pre(layer.rows);
        std::vector<T> dpre(layer.rows);
        for (std::size_t j = 0; j < layer.rows; ++j) {
            T acc = layer.b[j];
            for (std::size_t k = 0; k < layer.cols; ++k) acc += layer.w[j * layer.cols + k] * real[k];
            pre[j] = acc;
            T dacc = layer.w[j * layer.cols] * tangent[0];
            for (std::size_t k = 1; k < layer.cols; ++k) dacc += layer.w[j * layer.cols + k] * tangent[k];
            dpre[j] = dacc;
        }
        if (layer.activation) {
            for (std::size_t j = 0; j < layer.rows; ++j) {
                if (*layer.activation == Activation::relu) {
                    if (!(pre[j] > T(0))) {
                        pre[j] = T(0);
                        dpre[j] = T(0);
                    }
                } else {
                    const T a = pre[j];
                    const T s = activate(*layer.activation, a);
                    dpre[j] = activation_derivative(*layer.activation, a, s) * dpre[j];
                    pre[j] = s;
                }
            }
        }
        real = std::move(pre);
        tangent = std::move(dpre);
    }
    return {real[0], tangent[0]};
}

struct EquivalenceReport {
    std::size_t samples = 0;
    std::uint64_t max_ulp_value = 0;
    std::uint64_t max_ulp_derivative = 0;
    std::uint64_t tolerance_ulp = 0;
    bool passed() const { return std::max(max_ulp_value, max_ulp_derivative) <= tolerance_ulp; }
};

/// Runs the interpreter on (x, v) samples and compares against the library's
/// dual_forward instantiated at float with downcast weights. Tolerance is
/// 4 float ULP for ReLU / identity nets and 8 ULP when libm transcendentals appear.
inline EquivalenceReport interpretive_equivalence(const NetworkSpec& net, const GeneratedUnit& unit,
                                                  const std::vector<std::pair<std::vector<double>, std::vector<double>>>& samples) {
    if (unit.manifest.scalar != "float")
        throw InvalidParameter("interpretive equivalence compares float units; emit with scalar width 32");
    const auto layers = interpret_layers<float>(unit);
    const auto net32 = net.cast<float>();
    EquivalenceReport rep;
    const bool smooth_calls = std::any_of(net.layers().begin(), net.layers().end(), [](const Layer<double>& l) {
        return l.activation && *l.activation != Activation::relu && *l.activation != Activation::identity;
    });
    rep.tolerance_ulp = smooth_calls ? 8 : 4;
    for (const auto& [x, v] : samples) {
        std::vector<float> xf(x.begin(), x.end());
        std::vector<float> vf(v.begin(), v.end());
        const Dual<float> lib = dual_forward<float>(net32, xf, vf);
        const Dual<float> gen = interpret_dual<float>(layers, xf, vf);
        rep.max_ulp_value = std::max(rep.max_ulp_value, ulp_distance(lib.re, gen.re));
        rep.max_ulp_derivative = std::max(rep.max_ulp_derivative, ulp_distance(lib.du, gen.du));
        ++rep.samples;
    }
    return rep;
}

}  // namespace dualcbf
