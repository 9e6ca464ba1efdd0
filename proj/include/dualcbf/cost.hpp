#pragma once

/**
 * @file cost.hpp
 * @brief Closed-form operation and storage counts, and their check against
 *        the instrumented passes.
 *
 *   C_f  = Σ_i 2 n_i n_{i-1} + Σ_{i<d} n_i
 *   C_df = 2 C_f + Σ_{i<d} c_σ n_i - Σ_{i=1..d} n_i
 *   C_ad = 2 C_f + Σ_{i<d} c_σ n_i - Σ_{i=1..d} n_{i-1}
 *
 *   dual constraint    (m + 1) C_df
 *   reverse constraint C_ad + (m + 1)(2 n_0 - 1)
 *
 *   m_df = n_θ + 2 max n_i,   m_ad = n_θ + Σ_{i<d} 2 n_i
 */

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dualcbf/dual.hpp"
#include "dualcbf/dynamics.hpp"
#include "dualcbf/lie.hpp"
#include "dualcbf/network.hpp"
#include "dualcbf/reverse.hpp"

namespace dualcbf {

using TranscendentalLedger = std::array<std::uint64_t, kActivationKinds>;

struct CostReport {
    std::vector<std::size_t> widths;
    std::vector<Activation> activations;
    std::size_t m = 0;

    std::uint64_t C_f = 0;
    std::uint64_t C_df = 0;
    std::uint64_t C_ad = 0;
    std::uint64_t constraint_total_dual = 0;
    std::uint64_t constraint_total_reverse = 0;

    std::uint64_t n_theta = 0;
    std::uint64_t m_df = 0;
    std::uint64_t m_ad = 0;

    /// Transcendental calls per pass, by activation kind. Not part of any FLOP count.
    TranscendentalLedger ledger_forward{};
    TranscendentalLedger ledger_dual{};
    TranscendentalLedger ledger_reverse{};

    std::vector<std::string> notes;

    std::uint64_t m_df_bytes_f32() const { return 4 * m_df; }
    std::uint64_t m_ad_bytes_f32() const { return 4 * m_ad; }
};

namespace detail {

inline void validate_architecture(const std::vector<std::size_t>& widths, const std::vector<Activation>& acts) {
    if (widths.size() < 2) throw InvalidArchitecture("need at least two widths");
    for (std::size_t w : widths)
        if (w == 0) throw InvalidArchitecture("widths must be positive");
    if (widths.back() != 1) throw InvalidArchitecture("terminal width must be 1");
    if (acts.size() != widths.size() - 2)
        throw InvalidArchitecture("expected " + std::to_string(widths.size() - 2) + " hidden activations, got " +
                                  std::to_string(acts.size()));
}

/// Cumulative closed-form operation count after each layer of a pass.
/// `dual` selects the dual pass, otherwise the real pass.
inline std::vector<std::uint64_t> closed_form_layer_marks(const std::vector<std::size_t>& widths,
                                                          const std::vector<Activation>& acts, bool dual) {
    std::vector<std::uint64_t> marks;
    std::uint64_t sum = 0;
    for (std::size_t i = 1; i < widths.size(); ++i) {
        const std::uint64_t r = widths[i];
        const std::uint64_t c = widths[i - 1];
        const bool hidden = i + 1 < widths.size();
        if (dual) {
            sum += 2 * r * c + r * (2 * c - 1);
            if (hidden) sum += r * (2 + derivative_flops(acts[i - 1]));
        } else {
            sum += 2 * r * c;
            if (hidden) sum += r;
        }
        marks.push_back(sum);
    }
    return marks;
}

/// 1-based index of the first differing mark, 0 if the prefixes agree.
inline int first_divergent_layer(const std::vector<std::uint64_t>& expected,
                                 const std::vector<std::uint64_t>& measured) {
    const std::size_t n = std::min(expected.size(), measured.size());
    for (std::size_t i = 0; i < n; ++i)
        if (expected[i] != measured[i]) return static_cast<int>(i + 1);
    return expected.size() == measured.size() ? 0 : static_cast<int>(n + 1);
}

}  // namespace detail

/// Evaluates every closed-form count for `widths` (n_0 .. n_d), one activation
/// per hidden layer and m inputs.
inline CostReport closed_form(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations,
                              std::size_t m) {
    detail::validate_architecture(widths, activations);
    if (m == 0) throw InvalidArchitecture("input dimension m must be positive");
    CostReport r;
    r.widths = widths;
    r.activations = activations;
    r.m = m;

    const std::size_t d = widths.size() - 1;
    std::uint64_t sum_hidden = 0;
    std::uint64_t sum_csigma = 0;
    std::uint64_t sum_out = 0;
    std::uint64_t sum_in = 0;
    std::uint64_t max_width = 0;
    for (std::size_t i = 1; i <= d; ++i) {
        r.C_f += 2 * widths[i] * widths[i - 1];
        r.n_theta += widths[i] * widths[i - 1] + widths[i];
        sum_out += widths[i];
        sum_in += widths[i - 1];
        max_width = std::max<std::uint64_t>(max_width, widths[i]);
        if (i < d) {
            const Activation kind = activations[i - 1];
            sum_hidden += widths[i];
            sum_csigma += derivative_flops(kind) * widths[i];
            const std::size_t k = index_of(kind);
            r.ledger_forward[k] += value_transcendentals(kind) * widths[i];
            r.ledger_dual[k] += (value_transcendentals(kind) + derivative_transcendentals(kind)) * widths[i];
        }
    }
    r.ledger_reverse = r.ledger_dual;
    r.C_f += sum_hidden;
    r.C_df = 2 * r.C_f + sum_csigma - sum_out;
    r.C_ad = 2 * r.C_f + sum_csigma - sum_in;
    r.constraint_total_dual = (m + 1) * r.C_df;
    r.constraint_total_reverse = r.C_ad + (m + 1) * (2 * widths[0] - 1);
    r.m_df = r.n_theta + 2 * max_width;
    r.m_ad = r.n_theta + 2 * sum_hidden;

    for (Activation kind : activations) {
        if (kind == Activation::softplus) {
            r.notes.push_back("softplus: derivative is one logistic evaluation, booked in the transcendental ledger "
                              "with c_sigma = 0 FLOPs");
            break;
        }
    }
    for (Activation kind : activations) {
        if (kind == Activation::sigmoid) {
            r.notes.push_back("sigmoid: c_sigma = 2 (s*(1-s): one multiply, one subtract)");
            break;
        }
    }
    return r;
}

inline CostReport closed_form(const NetworkSpec& net, std::size_t m) {
    return closed_form(net.widths(), net.hidden_activations(), m);
}

/// Instrumented counts next to their closed-form values.
struct VerificationRecord {
    CostReport expected;
    std::uint64_t C_f = 0;
    std::uint64_t C_df = 0;
    std::uint64_t C_ad = 0;
    std::uint64_t constraint_total_dual = 0;
    std::uint64_t constraint_total_reverse = 0;
    TranscendentalLedger ledger_dual{};
    TranscendentalLedger ledger_reverse{};
    /// Hyper-dual pass cost, measured only (no closed form). Zero for ReLU nets.
    std::uint64_t hyper_pass = 0;

    std::uint64_t cache_scalars = 0;       ///< reverse activation cache, measured
    std::uint64_t dual_scratch_scalars = 0;  ///< scratch of one dual pass, measured

    bool cache_matches() const { return expected.n_theta + cache_scalars == expected.m_ad; }
    bool scratch_matches() const { return expected.n_theta + dual_scratch_scalars == expected.m_df; }
};

/// Runs every instrumented pass at x and compares its count with the closed form.
/// Throws CountMismatch on the first FLOP or transcendental disagreement. Storage
/// figures are recorded, not enforced.
inline VerificationRecord verify_against_instrumentation(const NetworkSpec& net, const DynamicsModel& dyn,
                                                         std::span<const double> x) {
    detail::check_dynamics(net, dyn);
    detail::check_input(net, x.size(), "state");
    VerificationRecord rec;
    rec.expected = closed_form(net, dyn.m);
    const CostReport& e = rec.expected;
    const auto acts = net.hidden_activations();
    const auto f = dyn.drift(x);
    const auto G = dyn.input_matrix(x);

    OpCounter ops;
    forward(net, x, &ops);
    rec.C_f = ops.total();
    if (rec.C_f != e.C_f)
        throw CountMismatch("C_f", e.C_f, rec.C_f,
                            detail::first_divergent_layer(detail::closed_form_layer_marks(net.widths(), acts, false),
                                                          ops.layer_marks));

    ops.reset();
    dual_forward(net, x, std::span<const double>(f), &ops);
    rec.C_df = ops.total();
    rec.ledger_dual = ops.transcendentals;
    if (rec.C_df != e.C_df)
        throw CountMismatch("C_df", e.C_df, rec.C_df,
                            detail::first_divergent_layer(detail::closed_form_layer_marks(net.widths(), acts, true),
                                                          ops.layer_marks));
    for (std::size_t k = 0; k < kActivationKinds; ++k)
        if (rec.ledger_dual[k] != e.ledger_dual[k])
            throw CountMismatch(std::string("dual transcendentals (") + std::string(name_of(kAllActivations[k])) + ")",
                                e.ledger_dual[k], rec.ledger_dual[k]);

    ops.reset();
    ActivationCache<double> cache;
    gradient(net, x, &ops, &cache);
    rec.C_ad = ops.total();
    rec.ledger_reverse = ops.transcendentals;
    rec.cache_scalars = cache.scalar_count();
    if (rec.C_ad != e.C_ad) throw CountMismatch("C_ad", e.C_ad, rec.C_ad);
    for (std::size_t k = 0; k < kActivationKinds; ++k)
        if (rec.ledger_reverse[k] != e.ledger_reverse[k])
            throw CountMismatch(std::string("reverse transcendentals (") + std::string(name_of(kAllActivations[k])) +
                                    ")",
                                e.ledger_reverse[k], rec.ledger_reverse[k]);

    ops.reset();
    assemble(net, x, f, G, dyn.m, &ops);
    rec.constraint_total_dual = ops.total();
    if (rec.constraint_total_dual != e.constraint_total_dual)
        throw CountMismatch("dual constraint total", e.constraint_total_dual, rec.constraint_total_dual);

    ops.reset();
    assemble_constraint_reverse(net, x, f, G, dyn.m, &ops);
    rec.constraint_total_reverse = ops.total();
    if (rec.constraint_total_reverse != e.constraint_total_reverse)
        throw CountMismatch("reverse constraint total", e.constraint_total_reverse, rec.constraint_total_reverse);

    if (net.is_smooth()) {
        ops.reset();
        const auto seed = make_hyper_seed<double>(x, f, f, f);
        hyper_forward<double>(net, seed, &ops);
        rec.hyper_pass = ops.total();
    }
    rec.dual_scratch_scalars = dual_scratch_size(net);
    return rec;
}

}  // namespace dualcbf
