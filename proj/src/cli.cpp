#include "granet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "granet/dataset.hpp"
#include "granet/error.hpp"
#include "granet/gradsuite.hpp"
#include "granet/metrics.hpp"

namespace granet::cli {

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    std::filesystem::path p(value);
    return p.is_absolute() || base.empty() ? p : base / p;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::optional<std::filesystem::path> config_path(const std::string& flag) {
    if (!flag.empty()) return std::filesystem::path(flag);
    if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') return std::filesystem::path(env);
    return std::nullopt;
}

ClassMap classes_for(const std::optional<RunConfig>& rc, std::size_t class_count) {
    if (rc) {
        ClassMap m = rc->class_map();
        if (m.class_count() != class_count) {
            throw ConfigError("config lists " + std::to_string(m.class_count()) + " classes, checkpoint has " +
                              std::to_string(class_count));
        }
        return m;
    }
    if (class_count == ClassMap::isprs().class_count()) return ClassMap::isprs();
    std::vector<std::string> names;
    for (std::size_t c = 0; c < class_count; ++c) names.push_back("class" + std::to_string(c));
    return ClassMap(names);
}

PointCloud prepare(PointCloud cloud, const RunConfig& rc) { return rc.hag ? normalize_hag(cloud, rc.hag_cell) : cloud; }

data::BlockSet blocks_from_file(const std::filesystem::path& file, const RunConfig& rc, const ClassMap& classes) {
    const PointCloud cloud = prepare(read_cloud(file, classes), rc);
    const auto plan = spatial::tile_blocks(cloud.positions(), rc.tiling);
    return data::build_blocks(cloud, plan, rc.network, {rc.intensity_scale, rc.train.seed});
}

int cmd_tile(const std::string& input, const std::string& manifest, const spatial::TileOptions& opt,
             std::ostream& out) {
    const PointCloud cloud = read_cloud(input, ClassMap::isprs());
    const auto plan = spatial::tile_blocks(cloud.positions(), opt);
    spatial::write_manifest(plan, manifest);
    out << "subblocks: " << plan.subblocks.size() << '\n';
    std::size_t lo = cloud.size(), hi = 0, total = 0;
    for (std::size_t s = 0; s < plan.subblocks.size(); ++s) {
        const auto& sb = plan.subblocks[s];
        out << "  " << s << " block " << sb.block_id << " origin " << format_double(sb.origin_x) << ' '
            << format_double(sb.origin_y) << " points " << sb.indices.size() << '\n';
        lo = std::min(lo, sb.indices.size());
        hi = std::max(hi, sb.indices.size());
        total += sb.indices.size();
    }
    if (!plan.subblocks.empty()) {
        out << "points per subblock: min " << lo << " mean "
            << fixed(static_cast<double>(total) / static_cast<double>(plan.subblocks.size()), 1) << " max " << hi
            << '\n';
    }
    return 0;
}

int cmd_train(const RunConfig& rc, std::ostream& out) {
    const ClassMap classes = rc.class_map();
    if (classes.class_count() != rc.network.class_count) {
        throw ConfigError("network class_count " + std::to_string(rc.network.class_count) + " does not match " +
                          std::to_string(classes.class_count()) + " configured classes");
    }
    if (rc.train_file.empty()) throw ConfigError("train_file is not set");
    data::BlockSet train_set = blocks_from_file(rc.train_file, rc, classes);
    data::BlockSet val_set;
    if (!rc.validation_file.empty()) {
        val_set = blocks_from_file(rc.validation_file, rc, classes);
    } else if (rc.validation_fraction > 0.0) {
        val_set = data::split_validation(train_set, rc.validation_fraction, rc.train.seed);
    }
    std::filesystem::create_directories(rc.output_dir);
    {
        std::ofstream cfg(rc.output_dir / "run.ini", std::ios::trunc);
        if (!cfg) throw IoError("cannot write " + (rc.output_dir / "run.ini").string());
        cfg << rc.to_ini().to_string();
    }
    out << "training blocks: " << train_set.size() << ", validation blocks: "
        << (val_set.empty() ? std::string("none (using training blocks)") : std::to_string(val_set.size())) << '\n';

    net::GraNetModel model(rc.network);
    train::TrainOptions opt;
    opt.checkpoint_path = rc.output_dir / "checkpoint_best.bin";
    opt.log_path = rc.output_dir / "train.log";
    opt.on_epoch = [&](const train::EpochRecord& r) {
        out << train::format_log_line(r) << (r.checkpoint_saved ? "  *" : "") << '\n';
        return true;
    };
    const auto result = train::train(model, train_set, val_set, rc.train, opt);
    const auto final_eval = train::validate(model, train_set, rc.train.class_weights);
    out << "epochs: " << result.history.size() << ", checkpoints saved: " << result.checkpoints_saved
        << ", best validation loss: " << format_double(result.best_val_loss) << '\n';
    out << "final training OA: " << fixed(final_eval.report.overall_accuracy, 4) << '\n';
    return 0;
}

struct Prediction {
    PointCloud cloud;
    std::vector<std::size_t> labels;
    ClassMap classes;
};

Prediction predict_file(const std::string& checkpoint, const std::string& data_file,
                        const std::optional<RunConfig>& rc, std::size_t threads) {
    const net::GraNetModel model = net::load_checkpoint(checkpoint);
    Prediction p;
    p.classes = classes_for(rc, model.config().class_count);
    const RunConfig defaults;
    const RunConfig& cfg = rc ? *rc : defaults;
    const PointCloud raw = read_cloud(data_file, p.classes);
    const PointCloud cloud = prepare(raw, cfg);
    const auto plan = spatial::tile_blocks(cloud.positions(), cfg.tiling);
    p.labels = data::predict_cloud(model, cloud, plan, {cfg.intensity_scale, cfg.train.seed}, threads);
    p.cloud = raw;
    return p;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_file, const std::optional<RunConfig>& rc,
             const std::filesystem::path& output_dir, std::size_t threads, std::ostream& out) {
    const Prediction p = predict_file(checkpoint, data_file, rc, threads);
    if (!p.cloud.has_labels()) throw ContractError("eval needs a labeled point cloud");
    metrics::ConfusionMatrix cm(p.classes.class_count());
    cm.accumulate(p.cloud.labels(), p.labels);
    const auto report = metrics::report(cm);
    out << metrics::format_table(report, p.classes.names());
    std::filesystem::create_directories(output_dir);
    metrics::write_csv(report, output_dir / "metrics.csv", p.classes.names());
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& data_file, const std::optional<RunConfig>& rc,
                const std::filesystem::path& output_dir, std::size_t threads, std::ostream& out, std::ostream& err) {
    const Prediction p = predict_file(checkpoint, data_file, rc, threads);
    std::filesystem::create_directories(output_dir);
    write_labels(p.cloud, p.labels, output_dir / "labels.pts");
    out << "wrote " << (output_dir / "labels.pts").string() << '\n';
    if (p.cloud.has_labels()) {
        write_error_map(p.cloud, p.labels, output_dir / "errormap.pts");
        out << "wrote " << (output_dir / "errormap.pts").string() << '\n';
    } else {
        err << "warning: input has no labels, error map not written\n";
    }
    return 0;
}

int cmd_gradcheck(const std::string& module, std::uint64_t seed, std::ostream& out) {
    std::vector<std::string> modules;
    if (module == "all") modules = gradcheck_modules();
    else modules.push_back(module);
    bool ok = true;
    for (const auto& m : modules) {
        const auto r = run_gradcheck(m, seed);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-18s max relative error %.3e over %zu coordinates (%zu skipped)  %s\n",
                      r.module.c_str(), r.max_error, r.checked, r.skipped, r.passed() ? "PASS" : "FAIL");
        out << buf;
        ok = ok && r.passed();
    }
    return ok ? 0 : 1;
}

int cmd_params(const net::NetworkConfig& cfg, std::ostream& out) {
    const net::GraNetModel model(cfg);
    for (const auto& g : model.param_breakdown()) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%-10s %12zu\n", g.name.c_str(), g.count);
        out << buf;
    }
    const std::size_t total = model.param_count();
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-10s %12zu  (%.2f M)\n", "total", total, static_cast<double>(total) / 1e6);
    out << buf;
    return 0;
}

} // namespace

ClassMap RunConfig::class_map() const { return class_names.empty() ? ClassMap::isprs() : ClassMap(class_names); }

RunConfig RunConfig::from_ini(const IniDocument& doc, const std::filesystem::path& base) {
    RunConfig rc;
    rc.network = net::NetworkConfig::read_from(doc);
    rc.train = train::TrainConfig::read_from(doc);
    for (const auto& [key, value] : doc.section("data")) {
        if (key == "train_file") rc.train_file = resolve(base, value);
        else if (key == "validation_file") rc.validation_file = resolve(base, value);
        else if (key == "test_file") rc.test_file = resolve(base, value);
        else if (key == "output_dir") rc.output_dir = resolve(base, value);
        else if (key == "validation_fraction") rc.validation_fraction = parse_double_value(key, value);
        else if (key == "classes") rc.class_names = split_list(value);
        else if (key == "hag") rc.hag = parse_bool_value(key, value);
        else if (key == "hag_cell") rc.hag_cell = parse_double_value(key, value);
        else if (key == "intensity_scale") rc.intensity_scale = parse_double_value(key, value);
        else if (key == "block") rc.tiling.block = parse_double_value(key, value);
        else if (key == "sub") rc.tiling.sub = parse_double_value(key, value);
        else if (key == "stride") rc.tiling.stride = parse_double_value(key, value);
        else throw ConfigError("unknown key '" + key + "' in [data]");
    }
    if (rc.validation_fraction < 0.0 || rc.validation_fraction >= 1.0) {
        throw ConfigError("validation_fraction must lie in [0, 1)");
    }
    if (!(rc.intensity_scale > 0.0)) throw ConfigError("intensity_scale must be positive");
    if (!(rc.hag_cell > 0.0)) throw ConfigError("hag_cell must be positive");
    if (!rc.class_names.empty()) (void)rc.class_map();
    return rc;
}

IniDocument RunConfig::to_ini() const {
    IniDocument doc;
    network.write_to(doc);
    train.write_to(doc);
    auto set_path = [&](const char* key, const std::filesystem::path& p) {
        // Absolute, so the file can be loaded from wherever it is written.
        if (!p.empty()) doc.set("data", key, std::filesystem::absolute(p).lexically_normal().string());
    };
    set_path("train_file", train_file);
    set_path("validation_file", validation_file);
    set_path("test_file", test_file);
    set_path("output_dir", output_dir);
    if (validation_fraction > 0.0) doc.set("data", "validation_fraction", format_double(validation_fraction));
    std::string names;
    for (std::size_t i = 0; i < class_names.size(); ++i) names += (i ? "," : "") + class_names[i];
    if (!names.empty()) doc.set("data", "classes", names);
    doc.set("data", "hag", hag ? "true" : "false");
    doc.set("data", "hag_cell", format_double(hag_cell));
    doc.set("data", "intensity_scale", format_double(intensity_scale));
    doc.set("data", "block", format_double(tiling.block));
    doc.set("data", "sub", format_double(tiling.sub));
    doc.set("data", "stride", format_double(tiling.stride));
    return doc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return RunConfig::from_ini(IniDocument::read(path.string()), path.parent_path());
}

PointCloud read_cloud(const std::filesystem::path& path, const ClassMap& classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read point cloud " + path.string());
    std::string line;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok) || tok[0] == '#') continue;
        columns = 1;
        while (ls >> tok) ++columns;
        break;
    }
    if (columns != 0 && columns != 5 && columns != 6) {
        throw ParseError(path.string() + ": expected 5 or 6 columns, found " + std::to_string(columns));
    }
    return read_pts(path, columns == 6, classes);
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"GraNet point cloud semantic labeling"};
    app.require_subcommand(1);
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--threads", threads, "Worker threads for inference")->check(CLI::PositiveNumber);

    auto* tile = app.add_subcommand("tile", "Split a cloud into overlapping subblocks and write a manifest");
    std::string tile_in, tile_out;
    spatial::TileOptions tile_opt;
    tile->add_option("input", tile_in, "Point cloud (.pts)")->required();
    tile->add_option("manifest", tile_out, "Output manifest")->required();
    tile->add_option("--block", tile_opt.block, "Block size in meters");
    tile->add_option("--sub", tile_opt.sub, "Subblock size in meters");
    tile->add_option("--stride", tile_opt.stride, "Subblock stride in meters");

    std::string config_flag, output_flag;
    std::size_t epochs = 0;
    auto* train_cmd = app.add_subcommand("train", "Train a model from a run config");
    train_cmd->add_option("--config", config_flag, "Run config (overrides $GRANET_CONFIG)");
    train_cmd->add_option("--output", output_flag, "Output directory");
    train_cmd->add_option("--epochs", epochs, "Override max_epochs");

    std::string checkpoint, data_file;
    auto* eval_cmd = app.add_subcommand("eval", "Score a labeled cloud with a checkpoint");
    auto* predict_cmd = app.add_subcommand("predict", "Label a cloud with a checkpoint");
    for (auto* c : {eval_cmd, predict_cmd}) {
        c->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
        c->add_option("--data", data_file, "Point cloud (.pts)")->required();
        c->add_option("--config", config_flag, "Run config for class names and preprocessing");
        c->add_option("--output", output_flag, "Output directory");
    }

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    std::string module = "full";
    std::uint64_t grad_seed = 1;
    std::vector<std::string> module_names = gradcheck_modules();
    module_names.push_back("all");
    grad_cmd->add_option("--module", module, "Module to check")->check(CLI::IsMember(module_names));
    grad_cmd->add_option("--seed", grad_seed, "Random instance seed");

    auto* params_cmd = app.add_subcommand("params", "Learnable parameter counts per module");
    std::string preset = "default", gra_mode, ablation;
    params_cmd->add_option("--config", config_flag, "Run config");
    params_cmd->add_option("--preset", preset, "default or miniature")->check(CLI::IsMember({"default", "miniature"}));
    params_cmd->add_option("--gra-mode", gra_mode, "off, sra, cra, mode1, mode2 or mode3");
    params_cmd->add_option("--ablation", ablation, "Ablation model A-E")->check(CLI::IsMember({"A", "B", "C", "D", "E"}));

    auto* synth_cmd = app.add_subcommand("synthetic", "Write the synthetic three-class scene");
    std::string synth_out;
    std::uint64_t synth_seed = 7;
    std::size_t synth_points = 4096;
    synth_cmd->add_option("output", synth_out, "Output .pts file")->required();
    synth_cmd->add_option("--seed", synth_seed, "Scene seed");
    synth_cmd->add_option("--points", synth_points, "Point count")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        const auto cfg_path = config_path(config_flag);
        std::optional<RunConfig> rc;
        if (cfg_path) rc = load_run_config(*cfg_path);
        auto output_dir = [&](const std::filesystem::path& fallback) {
            return output_flag.empty() ? fallback : std::filesystem::path(output_flag);
        };

        if (*tile) return cmd_tile(tile_in, tile_out, tile_opt, out);
        if (*train_cmd) {
            if (!rc) throw ConfigError(std::string("train needs --config or $") + kConfigEnv);
            RunConfig run_cfg = *rc;
            run_cfg.output_dir = output_dir(run_cfg.output_dir);
            if (epochs > 0) run_cfg.train.max_epochs = epochs;
            return cmd_train(run_cfg, out);
        }
        if (*eval_cmd) {
            return cmd_eval(checkpoint, data_file, rc, output_dir(rc ? rc->output_dir : "."), threads, out);
        }
        if (*predict_cmd) {
            return cmd_predict(checkpoint, data_file, rc, output_dir(rc ? rc->output_dir : "."), threads, out, err);
        }
        if (*grad_cmd) return cmd_gradcheck(module, grad_seed, out);
        if (*params_cmd) {
            net::NetworkConfig cfg = rc ? rc->network
                                        : (preset == "miniature" ? net::NetworkConfig::miniature() : net::NetworkConfig{});
            if (!ablation.empty()) cfg = net::build_ablation(ablation[0], cfg);
            if (!gra_mode.empty()) cfg.gra_mode = gra::parse_gra_mode(gra_mode);
            return cmd_params(cfg, out);
        }
        if (*synth_cmd) {
            write_pts(data::synthetic_scene(synth_seed, synth_points), synth_out);
            out << "wrote " << synth_out << '\n';
            return 0;
        }
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace granet::cli
