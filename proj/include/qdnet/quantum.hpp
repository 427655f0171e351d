#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "qdnet/bits.hpp"
#include "qdnet/config.hpp"

namespace qdnet {

// Physical description of one link as the protocol implementations see it.
struct LinkPhysics {
    double length_km = 0.0;
    double total_attenuation_db = 0.0;
    std::optional<EveDecl> eve;

    static LinkPhysics from_link(const LinkDecl& link) {
        return {link.length_km, link.attenuation_db, link.eve};
    }
};

// One protocol execution on a link.
struct RoundOutcome {
    Bits secure_bits;       // post-reduction key material (initiator view)
    Bits peer_secure_bits;  // equals secure_bits unless compromised_divergent
    Bits alice_sifted;      // diagnostic, full sifted strings
    Bits bob_sifted;
    double qber = 0.0;
    uint64_t channel_uses = 0;  // pulses emitted
    double simulated_duration_s = 0.0;
    bool aborted = false;
    // Keys released despite disagreement (eavesdropper demonstration mode).
    bool compromised_divergent = false;
};

// Ideal channel plus optional intercept-resend attacker. Deterministic for a
// fixed seed. With release_on_abort, a QBER over threshold yields divergent
// Alice/Bob key material instead of an abort.
RoundOutcome run_bb84_with_eve(const ProtocolParams& params,
                               const std::optional<EveDecl>& eve, uint64_t seed,
                               bool release_on_abort = false);

// Lossy channel: fiber attenuation, detector inefficiency, dark counts and
// depolarization. An attacker splits the attenuation at its position.
RoundOutcome run_extended_bb84(const ProtocolParams& params,
                               const LinkPhysics& phys, uint64_t seed,
                               bool release_on_abort = false);

// Hamming distance over length. Throws std::invalid_argument on mismatch or
// empty input.
double estimate_qber(std::span<const uint8_t> alice_sample,
                     std::span<const uint8_t> bob_sample);

// Asymptotic key fraction max(0, 1 - 2*h2(qber)); stand-in for reconciliation
// and privacy amplification. Throws std::invalid_argument outside [0, 0.5].
double secure_fraction(double qber);

double simulated_duration(int rounds, const ProtocolParams& params);

// Secure bits per channel use; 0 for aborted outcomes.
double kbr(const RoundOutcome& outcome);

// Pluggable protocol interface: anything mapping (params, physics, seed) to a
// RoundOutcome may be registered under a name.
using ProtocolFn = std::function<RoundOutcome(
    const ProtocolParams&, const LinkPhysics&, uint64_t seed,
    bool release_on_abort)>;

class ProtocolRegistry {
   public:
    // Registry preloaded with the two built-in protocols.
    static ProtocolRegistry with_builtins();

    void add(const std::string& name, ProtocolFn fn);
    const ProtocolFn* find(const std::string& name) const;

   private:
    std::map<std::string, ProtocolFn> protocols_;
};

}  // namespace qdnet
