// hspan: hyperspectral pansharpening pipeline
//   toygen | prepare | upsample | train | fuse | evaluate | sweep | report
// One JSON config drives every stage; --set key=value overrides single
// fields. `evaluate` also accepts a direct fused/reference container pair.

#include "hspan/container.hpp"
#include "hspan/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

using namespace hspan;
using nlohmann::json;

namespace {

json load_config_json(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("invalid config JSON: " + std::string(e.what()));
    }
    return j;
}

void apply_override(json& j, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
        throw DataError("override '" + kv + "' is not key=value");
    std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    for (auto& ch : key)
        if (ch == '.') ch = '/';
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // bare string
    }
    j[json::json_pointer("/" + key)] = parsed;
}

int run(int argc, char** argv) {
    CLI::App app{"hyperspectral pansharpening pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    bool force = false;
    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--set", overrides, "override config fields, e.g. --set dip.lambda=0.5");
    app.add_flag("--force", force, "redo a stage even if its artifacts exist");

    for (const char* name : {"toygen", "prepare", "upsample", "train", "fuse", "sweep", "report"})
        app.add_subcommand(name);

    auto* eval_cmd = app.add_subcommand("evaluate");
    std::string fused_path, ref_path, out_path;
    int beta = 1;
    bool as_printed = false;
    eval_cmd->add_option("--fused", fused_path, "fused cube container (pair mode)");
    eval_cmd->add_option("--reference", ref_path, "reference cube container (pair mode)");
    eval_cmd->add_option("--beta", beta, "scale factor for ERGAS (pair mode)");
    eval_cmd->add_option("--out", out_path, "write the pair-mode report here instead of stdout");
    eval_cmd->add_flag("--ergas-as-printed", as_printed, "use the as-printed ERGAS form");

    CLI11_PARSE(app, argc, argv);

    // direct pair mode needs no config
    if (eval_cmd->parsed() && !fused_path.empty()) {
        if (ref_path.empty()) throw DataError("evaluate pair mode needs --reference");
        const HSICube x = read_cube(fused_path);
        const HSICube ref = read_cube(ref_path);
        const MetricReport r = evaluate(x, ref, beta, true,
                                        as_printed ? ErgasFormula::AsPrinted
                                                   : ErgasFormula::Canonical);
        auto num = [](double v) -> json {
            if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
            return v;
        };
        json j{{"cc", num(r.cc)},       {"sam_deg", num(r.sam_deg)}, {"rmse", num(r.rmse)},
               {"rsnr_db", num(r.rsnr_db)}, {"ergas", num(r.ergas)},     {"psnr_db", num(r.psnr_db)}};
        if (out_path.empty())
            std::cout << j.dump(2) << "\n";
        else {
            std::ofstream os(out_path);
            os << j.dump(2) << "\n";
        }
        return 0;
    }

    json cfg_json = load_config_json(config_path);
    for (const auto& kv : overrides) apply_override(cfg_json, kv);
    ExperimentConfig cfg = ExperimentConfig::from_json_text(cfg_json.dump());

    for (const auto* sub : app.get_subcommands()) {
        const auto dir = run_stage(cfg, parse_stage(sub->get_name()), force);
        std::cout << sub->get_name() << ": " << dir.string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
