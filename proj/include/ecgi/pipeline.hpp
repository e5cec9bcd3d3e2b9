#ifndef ECGI_PIPELINE_HPP
#define ECGI_PIPELINE_HPP

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecgi/config.hpp"
#include "ecgi/inverse_solver.hpp"
#include "ecgi/postprocess.hpp"
#include "ecgi/propagation.hpp"
#include "ecgi/transfer.hpp"

namespace ecgi {

/// Command-line level options layered on top of the config document.
struct RunOptions {
    std::string out_dir = "out";
    int workers = 1;
    std::optional<std::uint64_t> seed;   // overrides scenario.rng_seed
    std::optional<double> epsilon;       // overrides inverse.epsilon
    bool skip_simulate = false;          // reuse forward artifacts from disk
};

/// Orchestrates simulate -> reconstruct -> postprocess -> evaluate over one
/// scenario directory. Stages can run individually; any input not produced in
/// this process is loaded back from the artifacts on disk, so a stage sequence
/// split across invocations reproduces the in-process results exactly.
class Pipeline {
public:
    Pipeline(RunConfig config, RunOptions options);

    void simulate();
    void reconstruct();
    void postprocess();
    void evaluate();
    /// All stages; honors options.skip_simulate. Writes the manifest.
    void run_all();

    const RunConfig& config() const { return config_; }
    const nlohmann::json& metrics() const { return metrics_; }
    nlohmann::json manifest() const;
    void write_manifest();
    std::string scenario_dir() const;

    /// Methods produced by the postprocess stage, in output order.
    static const std::vector<std::string>& method_names();

private:
    void run_stage(const char* name, void (Pipeline::*fn)());
    void simulate_impl();
    void reconstruct_impl();
    void postprocess_impl();
    void evaluate_impl();
    void record_output(const std::string& relative_path);
    const ForwardMeshes& forward_meshes();
    const TransferOperator& transfer();
    TimeSeriesField load_series(const std::string& relative_path) const;

    RunConfig config_;
    RunOptions opt_;
    std::uint64_t hash_ = 0;

    std::optional<ForwardMeshes> fwd_meshes_;
    std::optional<ForwardResult> forward_;
    std::optional<TransferOperator> transfer_;
    std::optional<ReconstructionResult> recon_;
    std::map<std::string, ActivationMap> maps_;
    nlohmann::json metrics_;
    std::vector<std::pair<std::string, double>> timings_;
    std::vector<std::string> outputs_;
};

} // namespace ecgi

#endif
