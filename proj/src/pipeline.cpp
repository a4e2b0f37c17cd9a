#include "hspan/pipeline.hpp"

#include "hspan/container.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

namespace hspan {

namespace fs = std::filesystem;
using nlohmann::json;

// --------------------------------------------------------------------------
// config
// --------------------------------------------------------------------------

template <typename T>
static void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

static void parse_dip(const json& j, DIPConfig& c) {
    get_if(j, "noise_channels", c.noise_channels);
    get_if(j, "levels", c.levels);
    get_if(j, "down_width", c.down_width);
    get_if(j, "down_kernel", c.down_kernel);
    get_if(j, "skip_width", c.skip_width);
    get_if(j, "skip_kernel", c.skip_kernel);
    get_if(j, "iterations", c.iterations);
    get_if(j, "lr", c.lr);
    get_if(j, "weight_decay", c.weight_decay);
    get_if(j, "momentum", c.adam_beta1);
    get_if(j, "lambda", c.lambda);
    get_if(j, "seed", c.seed);
    get_if(j, "leaky_slope", c.leaky_slope);
    get_if(j, "srf_bottleneck", c.srf_bottleneck);
    get_if(j, "freeze_srf", c.freeze_srf);
    if (j.contains("downsampler")) {
        const auto s = j.at("downsampler").get<std::string>();
        if (s == "matched")
            c.downsampler = nn::Downsampler::MatchedGaussian;
        else if (s == "lanczos2")
            c.downsampler = nn::Downsampler::Lanczos2;
        else
            throw DataError("config: unknown downsampler '" + s + "'");
    }
    if (j.contains("srf_activation")) {
        const auto s = j.at("srf_activation").get<std::string>();
        if (s == "softmax")
            c.srf_activation = SrfActivation::Softmax;
        else if (s == "sigmoid")
            c.srf_activation = SrfActivation::Sigmoid;
        else
            throw DataError("config: unknown srf_activation '" + s + "'");
    }
}

static json dip_to_json(const DIPConfig& c) {
    return json{{"noise_channels", c.noise_channels},
                {"levels", c.levels},
                {"down_width", c.down_width},
                {"down_kernel", c.down_kernel},
                {"skip_width", c.skip_width},
                {"skip_kernel", c.skip_kernel},
                {"iterations", c.iterations},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"momentum", c.adam_beta1},
                {"lambda", c.lambda},
                {"seed", c.seed},
                {"leaky_slope", c.leaky_slope},
                {"srf_bottleneck", c.srf_bottleneck},
                {"freeze_srf", c.freeze_srf},
                {"downsampler",
                 c.downsampler == nn::Downsampler::MatchedGaussian ? "matched" : "lanczos2"},
                {"srf_activation",
                 c.srf_activation == SrfActivation::Softmax ? "softmax" : "sigmoid"}};
}

static void parse_hyperkite(const json& j, HyperKiteConfig& c) {
    get_if(j, "widths", c.widths);
    get_if(j, "kernels", c.kernels);
    get_if(j, "epochs", c.epochs);
    get_if(j, "lr", c.lr);
    get_if(j, "weight_decay", c.weight_decay);
    get_if(j, "momentum", c.adam_beta1);
    get_if(j, "batch_size", c.batch_size);
    get_if(j, "leaky_slope", c.leaky_slope);
    get_if(j, "seed", c.seed);
}

static json hyperkite_to_json(const HyperKiteConfig& c) {
    return json{{"widths", c.widths},     {"kernels", c.kernels},
                {"epochs", c.epochs},     {"lr", c.lr},
                {"weight_decay", c.weight_decay}, {"momentum", c.adam_beta1},
                {"batch_size", c.batch_size},     {"leaky_slope", c.leaky_slope},
                {"seed", c.seed}};
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError("config: invalid JSON: " + std::string(e.what()));
    }
    ExperimentConfig c;
    get_if(j, "dataset_name", c.dataset_name);
    get_if(j, "scene", c.scene_path);
    get_if(j, "output_root", c.output_root);
    if (j.contains("degrade")) {
        const auto& d = j.at("degrade");
        int beta = c.degrade.beta, ks = c.degrade.kernel_size, k = c.degrade.pan_band_count;
        double sigma = 0.0;
        get_if(d, "beta", beta);
        get_if(d, "kernel_size", ks);
        get_if(d, "sigma", sigma);
        get_if(d, "pan_band_count", k);
        c.degrade = DegradeSpec::make(beta, k, ks, sigma);
    }
    get_if(j, "patch", c.patch);
    if (j.contains("split")) {
        get_if(j.at("split"), "train_ratio", c.split.train_ratio);
        get_if(j.at("split"), "seed", c.split.seed);
    }
    get_if(j, "method", c.method);
    if (j.contains("dip")) parse_dip(j.at("dip"), c.dip);
    if (j.contains("hyperkite")) parse_hyperkite(j.at("hyperkite"), c.hyperkite);
    get_if(j, "fuse_zero_residual", c.fuse_zero_residual);
    get_if(j, "evaluate_target", c.evaluate_target);
    get_if(j, "evaluate_split", c.evaluate_split);
    get_if(j, "lambda_sweep", c.lambda_sweep);
    get_if(j, "rgb_bands", c.rgb_bands);
    get_if(j, "ergas_as_printed", c.ergas_as_printed);
    if (j.contains("toy")) {
        const auto& t = j.at("toy");
        get_if(t, "bands", c.toy.bands);
        get_if(t, "patch", c.toy.patch);
        get_if(t, "grid_rows", c.toy.grid_rows);
        get_if(t, "grid_cols", c.toy.grid_cols);
        get_if(t, "blobs_per_patch", c.toy.blobs_per_patch);
        get_if(t, "rects_per_patch", c.toy.rects_per_patch);
        get_if(t, "seed", c.toy.seed);
    }
    get_if(j, "jobs", c.jobs);
    return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string ExperimentConfig::canonical_json() const {
    json j{{"dataset_name", dataset_name},
           {"scene", scene_path},
           {"output_root", output_root},
           {"degrade",
            {{"beta", degrade.beta},
             {"kernel_size", degrade.kernel_size},
             {"sigma", degrade.sigma},
             {"pan_band_count", degrade.pan_band_count}}},
           {"patch", patch},
           {"split", {{"train_ratio", split.train_ratio}, {"seed", split.seed}}},
           {"method", method},
           {"dip", dip_to_json(dip)},
           {"hyperkite", hyperkite_to_json(hyperkite)},
           {"fuse_zero_residual", fuse_zero_residual},
           {"evaluate_target", evaluate_target},
           {"evaluate_split", evaluate_split},
           {"lambda_sweep", lambda_sweep},
           {"rgb_bands", rgb_bands},
           {"ergas_as_printed", ergas_as_printed},
           {"toy",
            {{"bands", toy.bands},
             {"patch", toy.patch},
             {"grid_rows", toy.grid_rows},
             {"grid_cols", toy.grid_cols},
             {"blobs_per_patch", toy.blobs_per_patch},
             {"rects_per_patch", toy.rects_per_patch},
             {"seed", toy.seed}}},
           {"jobs", jobs}};
    return j.dump();  // object keys are emitted sorted
}

uint64_t ExperimentConfig::config_hash() const {
    const std::string s = canonical_json();
    return fnv1a64(s.data(), s.size());
}

Stage parse_stage(const std::string& name) {
    if (name == "toygen") return Stage::Toygen;
    if (name == "prepare") return Stage::Prepare;
    if (name == "upsample") return Stage::Upsample;
    if (name == "train") return Stage::Train;
    if (name == "fuse") return Stage::Fuse;
    if (name == "evaluate") return Stage::Evaluate;
    if (name == "sweep") return Stage::Sweep;
    if (name == "report") return Stage::Report;
    throw DataError("unknown stage '" + name + "'");
}

// --------------------------------------------------------------------------
// small utilities
// --------------------------------------------------------------------------

static std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

static std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

static std::string read_text(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("missing file " + p.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

static void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot open " + p.string());
    os << text;
}

static uint64_t file_hash(const fs::path& p) {
    const std::string s = read_text(p);
    return fnv1a64(s.data(), s.size());
}

// run fn(i) for i in [0,n) across up to `jobs` threads; exceptions rethrow.
// With several workers the BLAS goes single-threaded so the threading moves
// to the sample level; per-sample arithmetic is identical either way.
static void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    nn::blas_threads(1);
    struct Restore {
        ~Restore() { nn::blas_threads(0); }
    } restore;
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(static_cast<size_t>(jobs));
    std::atomic<int> next{0};
    for (int t = 0; t < jobs; ++t)
        pool.emplace_back([&, t] {
            try {
                for (int i = next++; i < n; i = next++) fn(i);
            } catch (...) {
                errs[static_cast<size_t>(t)] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

// --------------------------------------------------------------------------
// provenance records
// --------------------------------------------------------------------------

namespace {
struct StageRecord {
    std::string stage;
    std::string config_hash;
    json inputs = json::object();
};
}  // namespace

// Returns true when the stage is already complete with matching hashes
// (no-op), throws DataError when artifacts exist under a different config.
static bool check_stage_record(const fs::path& dir, const StageRecord& rec, bool force) {
    const fs::path p = dir / "stage.json";
    if (!fs::exists(p)) return false;
    json old;
    try {
        old = json::parse(read_text(p));
    } catch (...) {
        return false;  // unreadable record: redo
    }
    if (old.value("config_hash", "") == rec.config_hash && old["inputs"] == rec.inputs &&
        old.value("completed", false))
        return true;
    if (!force)
        throw DataError("stage '" + rec.stage + "' artifacts at " + dir.string() +
                        " were produced by a different config; rerun with force to overwrite");
    return false;
}

static void write_stage_record(const fs::path& dir, const StageRecord& rec) {
    json j{{"stage", rec.stage},
           {"config_hash", rec.config_hash},
           {"inputs", rec.inputs},
           {"completed", true}};
    write_text(dir / "stage.json", j.dump(2) + "\n");
}

// --------------------------------------------------------------------------
// sample directories and manifest
// --------------------------------------------------------------------------

void write_sample_dir(const FusionSample& s, const fs::path& dir) {
    write_cube(s.lr_hsi, dir / "lr", s.dataset_name);
    write_pan(s.pan, dir / "pan", s.dataset_name);
    if (s.has_reference) write_cube(s.reference, dir / "ref", s.dataset_name);
    json j{{"patch_id", s.patch_id}, {"dataset_name", s.dataset_name}, {"beta", s.beta}};
    write_text(dir / "sample.json", j.dump(2) + "\n");
}

FusionSample read_sample_dir(const fs::path& dir) {
    FusionSample s;
    const json j = json::parse(read_text(dir / "sample.json"));
    s.patch_id = j.at("patch_id").get<std::string>();
    s.dataset_name = j.at("dataset_name").get<std::string>();
    s.beta = j.at("beta").get<int>();
    s.lr_hsi = read_cube(dir / "lr");
    s.pan = read_pan(dir / "pan");
    if (fs::exists(dir / "ref" / "meta.json")) {
        s.reference = read_cube(dir / "ref");
        s.has_reference = true;
    }
    validate_sample(s);
    return s;
}

Manifest read_manifest(const fs::path& samples_dir) {
    const json j = json::parse(read_text(samples_dir / "manifest.json"));
    Manifest m;
    m.dataset_name = j.at("dataset_name").get<std::string>();
    m.beta = j.at("beta").get<int>();
    m.normalization = j.value("normalization", 1.0);
    for (const auto& e : j.at("samples"))
        m.entries.push_back({e.at("id").get<std::string>(), e.at("split").get<std::string>()});
    return m;
}

std::vector<std::string> Manifest::ids(const std::string& split) const {
    std::vector<std::string> out;
    for (const auto& e : entries)
        if (split == "all" || e.split == split) out.push_back(e.id);
    return out;
}

// --------------------------------------------------------------------------
// image artifacts
// --------------------------------------------------------------------------

void emit_error_map(const HSICube& x, const HSICube& ref, const fs::path& path) {
    if (x.bands != ref.bands || x.height != ref.height || x.width != ref.width)
        throw DimensionError("emit_error_map: dims mismatch");
    const int64_t plane = ref.plane();
    std::vector<float> err(static_cast<size_t>(plane), 0.0f);
    for (int64_t i = 0; i < plane; ++i) {
        double acc = 0.0;
        for (int b = 0; b < ref.bands; ++b)
            acc += std::fabs(static_cast<double>(x.data[static_cast<size_t>(b) * plane + i]) -
                             ref.data[static_cast<size_t>(b) * plane + i]);
        err[static_cast<size_t>(i)] = static_cast<float>(acc / ref.bands);
    }

    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    {
        std::ofstream os(fs::path(path.string() + ".f32"), std::ios::binary);
        if (!os) throw IoError("emit_error_map: cannot write raw map");
        os.write(reinterpret_cast<const char*>(err.data()),
                 static_cast<std::streamsize>(err.size() * sizeof(float)));
    }
    float lo = err[0], hi = err[0];
    for (float v : err) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const float span = hi - lo;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("emit_error_map: cannot write " + path.string());
    os << "P5\n" << ref.width << " " << ref.height << "\n255\n";
    for (float v : err) {
        const int g = span > 0 ? static_cast<int>(std::lround((v - lo) / span * 255.0f)) : 0;
        os.put(static_cast<char>(std::clamp(g, 0, 255)));
    }
}

void emit_rgb(const HSICube& x, const std::array<int, 3>& bands, const fs::path& path) {
    for (int b : bands)
        if (b < 0 || b >= x.bands)
            throw DimensionError("emit_rgb: band index " + std::to_string(b) + " out of range [0," +
                                 std::to_string(x.bands - 1) + "]");
    const int64_t plane = x.plane();
    // bands are (blue, green, red); PPM wants RGB order
    const std::array<int, 3> chan{bands[2], bands[1], bands[0]};
    std::array<float, 3> lo{}, hi{};
    for (int c = 0; c < 3; ++c) {
        const float* p = x.band(chan[static_cast<size_t>(c)]);
        lo[static_cast<size_t>(c)] = hi[static_cast<size_t>(c)] = p[0];
        for (int64_t i = 0; i < plane; ++i) {
            lo[static_cast<size_t>(c)] = std::min(lo[static_cast<size_t>(c)], p[i]);
            hi[static_cast<size_t>(c)] = std::max(hi[static_cast<size_t>(c)], p[i]);
        }
    }
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("emit_rgb: cannot write " + path.string());
    os << "P6\n" << x.width << " " << x.height << "\n255\n";
    for (int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) {
            const float* p = x.band(chan[static_cast<size_t>(c)]);
            const float span = hi[static_cast<size_t>(c)] - lo[static_cast<size_t>(c)];
            const int g = span > 0
                              ? static_cast<int>(std::lround((p[i] - lo[static_cast<size_t>(c)]) / span * 255.0f))
                              : 128;
            os.put(static_cast<char>(std::clamp(g, 0, 255)));
        }
}

// --------------------------------------------------------------------------
// metric reports
// --------------------------------------------------------------------------

static json report_to_json(const MetricReport& r) {
    auto num = [](double v) -> json {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
    };
    json j{{"cc", num(r.cc)},           {"sam_deg", num(r.sam_deg)},
           {"rmse", num(r.rmse)},       {"rsnr_db", num(r.rsnr_db)},
           {"ergas", num(r.ergas)},     {"psnr_db", num(r.psnr_db)},
           {"n_bands", r.n_bands},      {"n_pixels", r.n_pixels},
           {"sam_skipped_pixels", r.sam_skipped_pixels},
           {"psnr_inf_bands", r.psnr_inf_bands}};
    if (r.per_band_cc) j["per_band_cc"] = *r.per_band_cc;
    if (r.per_band_rmse) j["per_band_rmse"] = *r.per_band_rmse;
    if (r.per_band_psnr) {
        json arr = json::array();
        for (double v : *r.per_band_psnr) arr.push_back(num(v));
        j["per_band_psnr"] = arr;
    }
    return j;
}

static const char* kCsvHeader = "sample_id,cc,sam_deg,rmse,rsnr_db,ergas,psnr_db\n";

static std::string csv_row(const std::string& id, const MetricReport& r) {
    return id + "," + fmt_double(r.cc) + "," + fmt_double(r.sam_deg) + "," + fmt_double(r.rmse) +
           "," + fmt_double(r.rsnr_db) + "," + fmt_double(r.ergas) + "," + fmt_double(r.psnr_db) +
           "\n";
}

// arithmetic mean over samples; infinities propagate
static MetricReport mean_report(const std::vector<MetricReport>& rs) {
    MetricReport m;
    if (rs.empty()) return m;
    for (const auto& r : rs) {
        m.cc += r.cc;
        m.sam_deg += r.sam_deg;
        m.rmse += r.rmse;
        m.rsnr_db += r.rsnr_db;
        m.ergas += r.ergas;
        m.psnr_db += r.psnr_db;
    }
    const double n = static_cast<double>(rs.size());
    m.cc /= n;
    m.sam_deg /= n;
    m.rmse /= n;
    m.rsnr_db /= n;
    m.ergas /= n;
    m.psnr_db /= n;
    m.n_bands = rs[0].n_bands;
    m.n_pixels = rs[0].n_pixels;
    return m;
}

// --------------------------------------------------------------------------
// stage directories
// --------------------------------------------------------------------------

static std::string method_tag(const ExperimentConfig& c) {
    if (c.method == "dip-qss") {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", c.dip.lambda);
        return "dip-qss_l" + std::string(buf);
    }
    return c.method;
}

static fs::path root(const ExperimentConfig& c) { return c.output_root; }
static fs::path scene_dir(const ExperimentConfig& c) {
    return c.scene_path.empty() ? root(c) / "scene" : fs::path(c.scene_path);
}
static fs::path samples_dir(const ExperimentConfig& c) { return root(c) / "samples"; }
static fs::path upsample_dir(const ExperimentConfig& c) {
    return root(c) / "upsample" / method_tag(c);
}
static fs::path train_dir(const ExperimentConfig& c) { return root(c) / "train" / method_tag(c); }
static fs::path fuse_dir(const ExperimentConfig& c) { return root(c) / "fuse" / method_tag(c); }
static fs::path evaluate_dir(const ExperimentConfig& c) {
    return root(c) / "evaluate" / (c.evaluate_target + "_" + method_tag(c));
}

// --------------------------------------------------------------------------
// stages
// --------------------------------------------------------------------------

static fs::path stage_toygen(const ExperimentConfig& c, bool force) {
    const fs::path dir = root(c) / "scene";
    StageRecord rec{"toygen", hex64(c.config_hash())};
    if (check_stage_record(dir, rec, force)) return dir;
    HSICube scene = make_toy_scene(c.toy);
    write_cube(scene, dir, c.dataset_name);
    write_stage_record(dir, rec);
    return dir;
}

static fs::path stage_prepare(const ExperimentConfig& c, bool force) {
    const fs::path src = scene_dir(c);
    if (!fs::exists(src / "meta.json"))
        throw IoError("prepare: missing scene container at " + src.string() +
                      " (run toygen or point 'scene' at a cube)");
    const fs::path dir = samples_dir(c);
    StageRecord rec{"prepare", hex64(c.config_hash())};
    rec.inputs["scene_meta"] = hex64(file_hash(src / "meta.json"));
    rec.inputs["scene_data"] = hex64(file_hash(src / "data.f32"));
    if (check_stage_record(dir, rec, force)) return dir;

    HSICube scene = read_cube(src);
    // normalize to [0,1] by the global max at ingestion
    float mx = 0.0f;
    for (float v : scene.data) mx = std::max(mx, v);
    const double norm = mx > 0.0f ? static_cast<double>(mx) : 1.0;
    if (mx > 0.0f && mx != 1.0f)
        for (float& v : scene.data) v = static_cast<float>(v / norm);
    scene.value_range = {0.0, 1.0};

    auto patches = partition_patches(scene, c.patch);
    const int n = static_cast<int>(patches.size());

    // seeded shuffle fixes the unpublished train/test split
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(c.split.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const int n_train = static_cast<int>(std::floor(c.split.train_ratio * n));
    std::vector<std::string> split(static_cast<size_t>(n), "test");
    for (int i = 0; i < n_train; ++i) split[static_cast<size_t>(order[static_cast<size_t>(i)])] = "train";

    json entries = json::array();
    std::vector<std::string> ids(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%03d", i);
        ids[static_cast<size_t>(i)] = buf;
        entries.push_back({{"id", ids[static_cast<size_t>(i)]}, {"split", split[static_cast<size_t>(i)]}});
    }
    parallel_for(n, c.jobs, [&](int i) {
        FusionSample s = make_sample(patches[static_cast<size_t>(i)], c.degrade,
                                     ids[static_cast<size_t>(i)], c.dataset_name);
        write_sample_dir(s, dir / ids[static_cast<size_t>(i)]);
    });

    json manifest{{"dataset_name", c.dataset_name},
                  {"beta", c.degrade.beta},
                  {"normalization", norm},
                  {"patch", c.patch},
                  {"split_seed", c.split.seed},
                  {"train_ratio", c.split.train_ratio},
                  {"samples", entries}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    write_stage_record(dir, rec);
    return dir;
}

static void write_trace_csv(const fs::path& p, const std::vector<EnergySample>& trace) {
    std::string s = "iteration,spectral_term,spatial_term\n";
    for (const auto& e : trace)
        s += std::to_string(e.iteration) + "," + fmt_double(e.spectral) + "," +
             fmt_double(e.spatial) + "\n";
    write_text(p, s);
}

// runs one upsample method over the given ids, writing xdip containers
static void upsample_samples(const ExperimentConfig& c, const fs::path& out,
                             const std::vector<std::string>& ids, const std::string& method,
                             const DIPConfig& dip_cfg) {
    parallel_for(static_cast<int>(ids.size()), c.jobs, [&](int i) {
        const std::string& id = ids[static_cast<size_t>(i)];
        FusionSample s = read_sample_dir(samples_dir(c) / id);
        const fs::path sdir = out / id;
        if (method == "ref-copy") {
            if (!s.has_reference) throw DataError("ref-copy needs reference cubes");
            write_cube(s.reference, sdir / "xdip", c.dataset_name);
            return;
        }
        const UpsampleMethod m = parse_upsample_method(method);
        if (m == UpsampleMethod::Nearest || m == UpsampleMethod::Bicubic) {
            write_cube(baseline_upsample(s.lr_hsi, s.beta, m), sdir / "xdip", c.dataset_name);
            return;
        }
        DIPConfig per_sample = dip_cfg;
        per_sample.seed ^= static_cast<uint32_t>(fnv1a64(id.data(), id.size()));
        auto [x_dip, state] = optimize_dip(s, per_sample, m);
        write_cube(x_dip, sdir / "xdip", c.dataset_name);
        write_trace_csv(sdir / "trace.csv", state.energy_trace);
        write_text(sdir / "srf.json", json(state.srf_response).dump() + "\n");
    });
}

static fs::path stage_upsample(const ExperimentConfig& c, bool force) {
    const fs::path dir = upsample_dir(c);
    StageRecord rec{"upsample", hex64(c.config_hash())};
    rec.inputs["manifest"] = hex64(file_hash(samples_dir(c) / "manifest.json"));
    if (check_stage_record(dir, rec, force)) return dir;
    const Manifest m = read_manifest(samples_dir(c));
    upsample_samples(c, dir, m.ids("all"), c.method, c.dip);
    write_stage_record(dir, rec);
    return dir;
}

static fs::path stage_train(const ExperimentConfig& c, bool force) {
    const fs::path dir = train_dir(c);
    StageRecord rec{"train", hex64(c.config_hash())};
    rec.inputs["manifest"] = hex64(file_hash(samples_dir(c) / "manifest.json"));
    rec.inputs["upsample"] = hex64(file_hash(upsample_dir(c) / "stage.json"));
    if (check_stage_record(dir, rec, force)) return dir;

    const Manifest m = read_manifest(samples_dir(c));
    std::vector<HyperKiteTrainItem> items;
    for (const auto& id : m.ids("train")) {
        FusionSample s = read_sample_dir(samples_dir(c) / id);
        if (!s.has_reference) throw DataError("train: sample " + id + " lacks a reference");
        items.push_back({read_cube(upsample_dir(c) / id / "xdip"), s.pan, s.reference});
    }
    if (items.empty()) throw DataError("train: no training samples in the manifest");

    std::mt19937 rng(c.hyperkite.seed);
    HyperKiteNet net(c.hyperkite, items[0].x_dip.bands, rng);
    const auto history = train(net, items);

    fs::create_directories(dir);
    save_checkpoint(net, dir / "checkpoint.hkpt");
    std::string csv = "epoch,loss\n";
    for (size_t e = 0; e < history.size(); ++e)
        csv += std::to_string(e) + "," + fmt_double(history[e]) + "\n";
    write_text(dir / "loss_history.csv", csv);
    write_stage_record(dir, rec);
    return dir;
}

static fs::path stage_fuse(const ExperimentConfig& c, bool force) {
    const fs::path dir = fuse_dir(c);
    StageRecord rec{"fuse", hex64(c.config_hash())};
    rec.inputs["manifest"] = hex64(file_hash(samples_dir(c) / "manifest.json"));
    rec.inputs["upsample"] = hex64(file_hash(upsample_dir(c) / "stage.json"));
    if (!c.fuse_zero_residual)
        rec.inputs["train"] = hex64(file_hash(train_dir(c) / "stage.json"));
    if (check_stage_record(dir, rec, force)) return dir;

    const Manifest m = read_manifest(samples_dir(c));
    std::unique_ptr<HyperKiteNet> net;
    if (!c.fuse_zero_residual)
        net = std::make_unique<HyperKiteNet>(load_checkpoint(train_dir(c) / "checkpoint.hkpt"));

    const auto ids = m.ids("all");
    for (const auto& id : ids) {
        FusionSample s = read_sample_dir(samples_dir(c) / id);
        HSICube x_dip = read_cube(upsample_dir(c) / id / "xdip");
        HSICube x_res = c.fuse_zero_residual
                            ? HSICube(x_dip.bands, x_dip.height, x_dip.width)
                            : net->forward(x_dip, s.pan);
        write_cube(fuse(x_dip, x_res), dir / id / "fused", c.dataset_name);
    }
    write_stage_record(dir, rec);
    return dir;
}

static fs::path stage_evaluate(const ExperimentConfig& c, bool force) {
    const bool on_fused = c.evaluate_target == "fuse";
    if (!on_fused && c.evaluate_target != "upsample")
        throw DataError("evaluate: target must be 'fuse' or 'upsample'");
    const fs::path src = on_fused ? fuse_dir(c) : upsample_dir(c);
    const fs::path dir = evaluate_dir(c);
    StageRecord rec{"evaluate", hex64(c.config_hash())};
    rec.inputs["manifest"] = hex64(file_hash(samples_dir(c) / "manifest.json"));
    rec.inputs["target"] = hex64(file_hash(src / "stage.json"));
    if (check_stage_record(dir, rec, force)) return dir;

    const Manifest m = read_manifest(samples_dir(c));
    const auto ids = m.ids(c.evaluate_split);
    const auto formula = c.ergas_as_printed ? ErgasFormula::AsPrinted : ErgasFormula::Canonical;

    std::vector<MetricReport> reports(ids.size());
    parallel_for(static_cast<int>(ids.size()), c.jobs, [&](int i) {
        const auto& id = ids[static_cast<size_t>(i)];
        FusionSample s = read_sample_dir(samples_dir(c) / id);
        if (!s.has_reference) throw DataError("evaluate: sample " + id + " lacks a reference");
        HSICube x = read_cube(src / id / (on_fused ? "fused" : "xdip"));
        reports[static_cast<size_t>(i)] = evaluate(x, s.reference, m.beta, true, formula);
    });

    std::string csv = kCsvHeader;
    json jr = json::object();
    jr["samples"] = json::array();
    for (size_t i = 0; i < ids.size(); ++i) {
        csv += csv_row(ids[i], reports[i]);
        json one = report_to_json(reports[i]);
        one["sample_id"] = ids[i];
        jr["samples"].push_back(one);
    }
    if (!reports.empty()) {
        const MetricReport mean = mean_report(reports);
        csv += csv_row("mean", mean);
        jr["mean"] = report_to_json(mean);
    } else {
        jr["warning"] = "no samples matched split '" + c.evaluate_split + "'";
        std::cerr << "evaluate: warning: no samples matched split '" << c.evaluate_split << "'\n";
    }
    fs::create_directories(dir);
    write_text(dir / "report.csv", csv);
    write_text(dir / "report.json", jr.dump(2) + "\n");
    write_stage_record(dir, rec);
    return dir;
}

static fs::path stage_sweep(const ExperimentConfig& c, bool force) {
    const fs::path dir = root(c) / "sweep";
    StageRecord rec{"sweep", hex64(c.config_hash())};
    rec.inputs["manifest"] = hex64(file_hash(samples_dir(c) / "manifest.json"));
    if (check_stage_record(dir, rec, force)) return dir;

    const Manifest m = read_manifest(samples_dir(c));
    const auto ids = m.ids("test");
    if (ids.empty()) throw DataError("sweep: no test samples in the manifest");
    const auto formula = c.ergas_as_printed ? ErgasFormula::AsPrinted : ErgasFormula::Canonical;

    std::string csv = "lambda,cc,sam_deg,rmse,rsnr_db,ergas,psnr_db\n";
    for (double lam : c.lambda_sweep) {
        DIPConfig dcfg = c.dip;
        dcfg.lambda = lam;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "lambda_%g", lam);
        const fs::path ldir = dir / buf;
        upsample_samples(c, ldir, ids, "dip-qss", dcfg);

        std::vector<MetricReport> reports;
        std::string lcsv = kCsvHeader;
        for (const auto& id : ids) {
            FusionSample s = read_sample_dir(samples_dir(c) / id);
            HSICube x = read_cube(ldir / id / "xdip");
            reports.push_back(evaluate(x, s.reference, m.beta, false, formula));
            lcsv += csv_row(id, reports.back());
        }
        const MetricReport mean = mean_report(reports);
        lcsv += csv_row("mean", mean);
        write_text(ldir / "report.csv", lcsv);
        csv += fmt_double(lam) + "," + fmt_double(mean.cc) + "," + fmt_double(mean.sam_deg) + "," +
               fmt_double(mean.rmse) + "," + fmt_double(mean.rsnr_db) + "," +
               fmt_double(mean.ergas) + "," + fmt_double(mean.psnr_db) + "\n";
    }
    write_text(dir / "sweep_report.csv", csv);
    write_stage_record(dir, rec);
    return dir;
}

static fs::path stage_report(const ExperimentConfig& c, bool force) {
    const bool on_fused = c.evaluate_target == "fuse";
    const fs::path src = on_fused ? fuse_dir(c) : upsample_dir(c);
    const fs::path dir = root(c) / "report" / (c.evaluate_target + "_" + method_tag(c));
    StageRecord rec{"report", hex64(c.config_hash())};
    rec.inputs["evaluate"] = hex64(file_hash(evaluate_dir(c) / "stage.json"));
    if (check_stage_record(dir, rec, force)) return dir;

    const Manifest m = read_manifest(samples_dir(c));
    fs::create_directories(dir);
    for (const auto& id : m.ids(c.evaluate_split)) {
        FusionSample s = read_sample_dir(samples_dir(c) / id);
        HSICube x = read_cube(src / id / (on_fused ? "fused" : "xdip"));
        emit_rgb(x, c.rgb_bands, dir / (id + "_rgb.ppm"));
        if (s.has_reference) {
            emit_rgb(s.reference, c.rgb_bands, dir / (id + "_ref_rgb.ppm"));
            emit_error_map(x, s.reference, dir / (id + "_err.pgm"));
        }
    }
    write_text(dir / "table.csv", read_text(evaluate_dir(c) / "report.csv"));
    write_stage_record(dir, rec);
    return dir;
}

fs::path run_stage(const ExperimentConfig& config, Stage stage, bool force) {
    switch (stage) {
        case Stage::Toygen: return stage_toygen(config, force);
        case Stage::Prepare: return stage_prepare(config, force);
        case Stage::Upsample: return stage_upsample(config, force);
        case Stage::Train: return stage_train(config, force);
        case Stage::Fuse: return stage_fuse(config, force);
        case Stage::Evaluate: return stage_evaluate(config, force);
        case Stage::Sweep: return stage_sweep(config, force);
        case Stage::Report: return stage_report(config, force);
    }
    throw DataError("run_stage: unknown stage");
}

}  // namespace hspan
