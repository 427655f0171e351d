// qdnet-harness: scripted experiment runs against the built-in star topology.
//
//   qdnet-harness scenario-b --out DIR [--seed N] [--time-scale X]
//   qdnet-harness sweep-c    --out DIR [--seed N] [--reps N]
//   qdnet-harness scaling-a  --out DIR [--reps N] [--artifact PATH]

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "qdnet/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"experiment harness for the key-distribution emulator"};
    app.require_subcommand(1);

    std::string out_dir;
    uint64_t seed = 12345;
    double time_scale = 50.0;
    int reps = 10;
    std::string artifact;

    auto* scenario = app.add_subcommand(
        "scenario-b", "four validation processes on the ideal star");
    scenario->add_option("--out", out_dir, "output directory");
    scenario->add_option("--seed", seed, "master seed");
    scenario->add_option("--time-scale", time_scale, "latency compression");

    auto* sweep = app.add_subcommand(
        "sweep-c", "key-size sweep on the lossy star (times and bit rates)");
    sweep->add_option("--out", out_dir, "output directory");
    sweep->add_option("--seed", seed, "master seed");
    sweep->add_option("--reps", reps, "repetitions per (link, size)");
    sweep->add_option("--time-scale", time_scale, "latency compression");

    auto* scaling = app.add_subcommand(
        "scaling-a", "provisioning stage times vs node count");
    scaling->add_option("--out", out_dir, "output directory");
    scaling->add_option("--reps", reps, "repetitions per node count");
    scaling->add_option("--artifact", artifact,
                        "qdnet binary to deploy (default: $QDNET_BIN)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*scenario) {
            qdnet::ScenarioBResult r =
                qdnet::run_scenario_b(seed, time_scale, out_dir);
            std::printf("process 1: 512-bit %.3fs, 64-bit %.3fs (%s)\n",
                        r.p1_completion_512, r.p1_completion_64,
                        r.p1_completion_512 < r.p1_completion_64
                            ? "longer key finished first: serialized link"
                            : "UNEXPECTED ordering");
            std::printf("process 2: 512-bit %.3fs, 64-bit %.3fs (%s)\n",
                        r.p2_completion_512, r.p2_completion_64,
                        r.p2_completion_64 < r.p2_completion_512
                            ? "short key overtook on the free link"
                            : "UNEXPECTED ordering");
            std::printf("process 3: QBER %.4f, key copies %s\n", r.p3_qber,
                        r.p3_divergent ? "divergent (attack visible)"
                                       : "identical");
            std::printf("process 4: relayed end-to-end key %s\n",
                        r.p4_keys_equal ? "shared correctly" : "MISMATCHED");
            return 0;
        }
        if (*sweep) {
            auto rows = qdnet::run_sweep_c(seed, {64, 128, 256, 512}, reps,
                                           time_scale, out_dir);
            std::printf("%-22s %6s %12s %12s %10s\n", "link", "bits",
                        "time_s", "ci95_s", "kbr");
            for (const auto& row : rows)
                std::printf("%-22s %6d %12.4f %12.4f %10.5f\n",
                            row.link.c_str(), row.size_bits, row.mean_time_s,
                            row.ci95_time_s, row.mean_kbr);
            return 0;
        }
        if (*scaling) {
            auto rows = qdnet::run_scaling_a({2, 4, 10}, reps, out_dir,
                                             artifact);
            std::printf("%6s %-26s %10s %10s %8s\n", "nodes", "stage",
                        "mean_s", "ci95_s", "actions");
            for (const auto& row : rows)
                std::printf("%6d %-26s %10.4f %10.4f %8d\n", row.node_count,
                            row.stage.c_str(), row.mean_s, row.ci95_s,
                            row.action_count);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
