#include "qdnet/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace qdnet {

namespace {

// Sample disclosure, QBER estimation, abort decision and secure-key
// reduction, shared by both protocol implementations.
void sift_and_reduce(const ProtocolParams& params, Bits alice, Bits bob,
                     std::mt19937_64& rng, bool release_on_abort,
                     RoundOutcome& out) {
    out.alice_sifted = alice;
    out.bob_sifted = bob;
    size_t n = alice.size();
    if (n == 0) {
        out.aborted = true;
        out.qber = 0.0;
        return;
    }

    // Disclose a random sample for QBER estimation; sampled bits are removed
    // from the key material.
    size_t sample_count = std::max<size_t>(
        1, static_cast<size_t>(std::llround(params.qber_sample_fraction *
                                            static_cast<double>(n))));
    sample_count = std::min(sample_count, n);
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);

    size_t mismatches = 0;
    for (size_t i = 0; i < sample_count; ++i) {
        if (alice[idx[i]] != bob[idx[i]]) ++mismatches;
    }
    out.qber = static_cast<double>(mismatches) / static_cast<double>(sample_count);

    std::vector<size_t> kept(idx.begin() + static_cast<long>(sample_count),
                             idx.end());
    std::sort(kept.begin(), kept.end());
    Bits alice_rem, bob_rem;
    alice_rem.reserve(kept.size());
    bob_rem.reserve(kept.size());
    for (size_t i : kept) {
        alice_rem.push_back(alice[i]);
        bob_rem.push_back(bob[i]);
    }

    if (out.qber > params.qber_abort_threshold) {
        if (release_on_abort) {
            out.compromised_divergent = true;
            out.secure_bits = std::move(alice_rem);
            out.peer_secure_bits = std::move(bob_rem);
        } else {
            out.aborted = true;
        }
        return;
    }

    double r = secure_fraction(std::min(out.qber, 0.5));
    size_t keep = static_cast<size_t>(
        std::floor(r * static_cast<double>(alice_rem.size())));
    alice_rem.resize(keep);
    // Reconciliation stand-in: both sides end up with the initiator's bits.
    out.secure_bits = alice_rem;
    out.peer_secure_bits = std::move(alice_rem);
}

}  // namespace

RoundOutcome run_bb84_with_eve(const ProtocolParams& params,
                               const std::optional<EveDecl>& eve, uint64_t seed,
                               bool release_on_abort) {
    params.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto coin = [&rng]() { return static_cast<uint8_t>(rng() & 1u); };

    Bits alice, bob;
    alice.reserve(static_cast<size_t>(params.pulses_per_round) / 2 + 64);
    bob.reserve(alice.capacity());

    double f = eve ? eve->intercept_fraction : 0.0;
    double e = eve ? eve->error_per_intercept : 0.25;

    for (int pulse = 0; pulse < params.pulses_per_round; ++pulse) {
        uint8_t a_bit = coin();
        uint8_t a_basis = coin();
        bool intercepted = f > 0 && unit(rng) < f;
        uint8_t b_basis = coin();
        if (b_basis != a_basis) continue;  // sifted away
        uint8_t b_bit = a_bit;
        // Intercepted matched-basis bits flip with probability
        // error_per_intercept; 0.25 reproduces random-basis intercept-resend.
        if (intercepted && unit(rng) < e) b_bit ^= 1u;
        alice.push_back(a_bit);
        bob.push_back(b_bit);
    }

    RoundOutcome out;
    out.channel_uses = static_cast<uint64_t>(params.pulses_per_round);
    out.simulated_duration_s = simulated_duration(1, params);
    sift_and_reduce(params, std::move(alice), std::move(bob), rng,
                    release_on_abort, out);
    return out;
}

RoundOutcome run_extended_bb84(const ProtocolParams& params,
                               const LinkPhysics& phys, uint64_t seed,
                               bool release_on_abort) {
    params.validate();
    if (phys.total_attenuation_db < 0 || phys.length_km < 0)
        throw std::invalid_argument("link physics out of range");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto coin = [&rng]() { return static_cast<uint8_t>(rng() & 1u); };

    double t_total = std::pow(10.0, -phys.total_attenuation_db / 10.0);
    double f = 0.0, e = 0.25;
    double t_before = t_total, t_after = 1.0;
    if (phys.eve) {
        f = phys.eve->intercept_fraction;
        e = phys.eve->error_per_intercept;
        // Attenuation splits at the attacker's position; loss before the
        // attacker reduces what she can intercept.
        double frac = phys.length_km > 0
                          ? phys.eve->position_km / phys.length_km
                          : 0.0;
        double db_before = phys.total_attenuation_db * frac;
        t_before = std::pow(10.0, -db_before / 10.0);
        t_after = t_total / t_before;
    }

    Bits alice, bob;
    for (int pulse = 0; pulse < params.pulses_per_round; ++pulse) {
        uint8_t a_bit = coin();
        uint8_t a_basis = coin();

        bool intercepted = false;
        bool arrived;
        if (phys.eve) {
            bool reaches_eve = unit(rng) < t_before;
            if (reaches_eve && f > 0 && unit(rng) < f) intercepted = true;
            arrived = reaches_eve && unit(rng) < t_after;
        } else {
            arrived = unit(rng) < t_total;
        }

        bool signal_click = arrived && unit(rng) < params.detector_efficiency;
        uint8_t b_basis, b_bit;
        if (signal_click) {
            b_basis = coin();
            if (params.depolarization_prob > 0 &&
                unit(rng) < params.depolarization_prob) {
                b_bit = coin();  // state replaced by a random one
            } else if (b_basis == a_basis) {
                b_bit = a_bit;
                if (intercepted && unit(rng) < e) b_bit ^= 1u;
            } else {
                b_bit = coin();
            }
        } else if (params.dark_count_prob > 0 &&
                   unit(rng) < params.dark_count_prob) {
            b_basis = coin();
            b_bit = coin();  // dark-count click carries no signal
        } else {
            continue;  // no detection, discarded before sifting
        }

        if (b_basis != a_basis) continue;
        alice.push_back(a_bit);
        bob.push_back(b_bit);
    }

    RoundOutcome out;
    out.channel_uses = static_cast<uint64_t>(params.pulses_per_round);
    out.simulated_duration_s = simulated_duration(1, params);
    sift_and_reduce(params, std::move(alice), std::move(bob), rng,
                    release_on_abort, out);
    return out;
}

double estimate_qber(std::span<const uint8_t> alice_sample,
                     std::span<const uint8_t> bob_sample) {
    if (alice_sample.size() != bob_sample.size())
        throw std::invalid_argument("qber sample length mismatch");
    if (alice_sample.empty())
        throw std::invalid_argument("qber sample is empty");
    size_t mismatches = 0;
    for (size_t i = 0; i < alice_sample.size(); ++i)
        if (alice_sample[i] != bob_sample[i]) ++mismatches;
    return static_cast<double>(mismatches) /
           static_cast<double>(alice_sample.size());
}

double secure_fraction(double qber) {
    if (qber < 0.0 || qber > 0.5)
        throw std::invalid_argument("qber must be in [0, 0.5]");
    auto h2 = [](double p) {
        if (p <= 0.0 || p >= 1.0) return 0.0;
        return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
    };
    return std::max(0.0, 1.0 - 2.0 * h2(qber));
}

double simulated_duration(int rounds, const ProtocolParams& params) {
    if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    return rounds * (params.pulses_per_round / params.pulse_rate_hz +
                     params.classical_overhead_s);
}

double kbr(const RoundOutcome& outcome) {
    if (outcome.channel_uses == 0)
        throw std::invalid_argument("channel_uses must be >= 1");
    return static_cast<double>(outcome.secure_bits.size()) /
           static_cast<double>(outcome.channel_uses);
}

ProtocolRegistry ProtocolRegistry::with_builtins() {
    ProtocolRegistry reg;
    reg.add("bb84_with_eve",
            [](const ProtocolParams& p, const LinkPhysics& phys, uint64_t seed,
               bool release) {
                return run_bb84_with_eve(p, phys.eve, seed, release);
            });
    reg.add("extended_bb84",
            [](const ProtocolParams& p, const LinkPhysics& phys, uint64_t seed,
               bool release) {
                return run_extended_bb84(p, phys, seed, release);
            });
    return reg;
}

void ProtocolRegistry::add(const std::string& name, ProtocolFn fn) {
    protocols_[name] = std::move(fn);
}

const ProtocolFn* ProtocolRegistry::find(const std::string& name) const {
    auto it = protocols_.find(name);
    return it == protocols_.end() ? nullptr : &it->second;
}

}  // namespace qdnet
