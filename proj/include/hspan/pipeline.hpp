#pragma once

#include "hspan/cube.hpp"
#include "hspan/degrade.hpp"
#include "hspan/dip.hpp"
#include "hspan/hyperkite.hpp"
#include "hspan/metrics.hpp"
#include "hspan/toydata.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace hspan {

// One JSON document drives every stage; stage provenance records carry a
// hash of the canonicalized config plus hashes of the upstream records so
// reruns are no-ops and config mixing is refused.

struct SplitSpec {
    double train_ratio = 0.7;
    uint32_t seed = 17;
};

struct ExperimentConfig {
    std::string dataset_name = "toy";
    std::string scene_path;  // empty: use <output_root>/scene (toygen output)
    std::string output_root = "runs/toy";
    DegradeSpec degrade = DegradeSpec::make(2, 2);
    int patch = 32;
    SplitSpec split;
    std::string method = "dip-qss";  // dip-qss | dip-spectral | nearest | bicubic | ref-copy
    DIPConfig dip;
    HyperKiteConfig hyperkite;
    bool fuse_zero_residual = false;
    std::string evaluate_target = "fuse";  // fuse | upsample
    std::string evaluate_split = "test";   // test | train | all
    std::vector<double> lambda_sweep{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::array<int, 3> rgb_bands{0, 1, 2};  // blue, green, red band indices
    bool ergas_as_printed = false;
    ToySceneSpec toy;
    int jobs = 1;

    static ExperimentConfig from_json_file(const std::filesystem::path& path);
    static ExperimentConfig from_json_text(const std::string& text);
    std::string canonical_json() const;
    uint64_t config_hash() const;
};

enum class Stage { Toygen, Prepare, Upsample, Train, Fuse, Evaluate, Sweep, Report };
Stage parse_stage(const std::string& name);

struct ManifestEntry {
    std::string id;
    std::string split;  // "train" | "test"
};
struct Manifest {
    std::string dataset_name;
    int beta = 1;
    double normalization = 1.0;
    std::vector<ManifestEntry> entries;

    std::vector<std::string> ids(const std::string& split) const;  // "all" accepted
};
Manifest read_manifest(const std::filesystem::path& samples_dir);

// Runs one stage; returns the directory holding its artifacts. Rerunning a
// completed stage with an identical config and inputs is a no-op. Throws
// DataError on a config-hash mismatch with existing artifacts (force=true
// overwrites), IoError on missing upstream artifacts.
std::filesystem::path run_stage(const ExperimentConfig& config, Stage stage, bool force = false);

// Per-pixel mean absolute error across bands; writes the min-max normalized
// 8-bit PGM plus the raw float map alongside it (path + ".f32").
void emit_error_map(const HSICube& x, const HSICube& ref, const std::filesystem::path& path);

// 3-channel 8-bit PPM; bands are (blue, green, red) indices, each channel
// min-max stretched independently.
void emit_rgb(const HSICube& x, const std::array<int, 3>& bands,
              const std::filesystem::path& path);

FusionSample read_sample_dir(const std::filesystem::path& dir);
void write_sample_dir(const FusionSample& s, const std::filesystem::path& dir);

}  // namespace hspan
