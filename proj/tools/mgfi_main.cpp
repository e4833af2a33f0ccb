#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mgfi/checkpoint.hpp"
#include "mgfi/errors.hpp"
#include "mgfi/gradcheck_suite.hpp"
#include "mgfi/image_io.hpp"
#include "mgfi/metrics.hpp"
#include "mgfi/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw mgfi::DataError(path + ": cannot open");
    return std::string(std::istreambuf_iterator<char>(f),
                       std::istreambuf_iterator<char>());
}

int cmd_synth_data(const std::string& config_path, const std::string& out_dir) {
    mgfi::TrainConfig cfg;
    if (!config_path.empty()) cfg = mgfi::train_config_from_json(read_file(config_path));
    std::vector<mgfi::Sample> samples = mgfi::synth_generate(cfg.synth);
    mgfi::SplitIndices sp = mgfi::split(static_cast<int>(samples.size()), cfg.synth.seed);
    mgfi::write_dataset(out_dir, samples, sp, cfg.synth);
    std::printf("wrote %zu samples to %s (train %zu / val %zu / test %zu)\n",
                samples.size(), out_dir.c_str(), sp.train.size(), sp.val.size(),
                sp.test.size());
    return 0;
}

int cmd_train(const std::string& config_path) {
    mgfi::TrainConfig cfg;
    if (!config_path.empty()) cfg = mgfi::train_config_from_json(read_file(config_path));
    mgfi::TrainReport report = mgfi::train(cfg);
    for (const mgfi::EpochStats& e : report.epochs) {
        std::printf("epoch %3d  loss %.4f (ce %.4f dice %.4f boundary %.4f)  val dice %.4f\n",
                    e.epoch, e.train_total, e.train_ce, e.train_dice, e.train_boundary,
                    e.val_dice);
    }
    std::printf("best epoch %d (val dice %.4f), checkpoint %s\n", report.best_epoch,
                report.best_val_dice, report.checkpoint_path.c_str());
    std::printf("test dice %.4f iou %.4f accuracy %.4f\n", report.test.dice,
                report.test.iou, report.test.accuracy);
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& split_name, const std::string& out_csv, bool oracle) {
    auto [config, params] = mgfi::load_checkpoint(ckpt);
    mgfi::Dataset ds = mgfi::load_dataset(data_dir);
    const std::vector<int>* idx = nullptr;
    if (split_name == "train") {
        idx = &ds.split.train;
    } else if (split_name == "val") {
        idx = &ds.split.val;
    } else if (split_name == "test") {
        idx = &ds.split.test;
    } else {
        throw mgfi::DataError("unknown split '" + split_name + "' (train|val|test)");
    }
    std::vector<mgfi::Sample> samples;
    for (int i : *idx) samples.push_back(ds.samples[static_cast<std::size_t>(i)]);
    mgfi::MetricReport r = mgfi::evaluate_samples(params, config, samples, oracle);
    const std::string csv = mgfi::metrics_csv({{config.variant_name(), r}});
    std::fputs(csv.c_str(), stdout);
    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        f << csv;
        if (!f) throw mgfi::DataError(out_csv + ": write failed");
    }
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path,
              const std::string& out_dir) {
    auto [config, params] = mgfi::load_checkpoint(ckpt);
    mgfi::Tensor image = mgfi::read_image(image_path);
    mgfi::Prediction pred = mgfi::predict(params, config, image);

    fs::create_directories(out_dir);
    const std::string stem = fs::path(image_path).stem().string();
    // class ids scaled to the full gray range (binary masks become 0/255)
    mgfi::Tensor mask = mgfi::Tensor::zeros(pred.mask.values.shape());
    const float scale = 1.0f / static_cast<float>(config.class_count - 1);
    for (std::int64_t i = 0; i < mask.size(); ++i) {
        mask.mutable_data()[i] = pred.mask.values.data()[i] * scale;
    }
    const std::string mask_path = (fs::path(out_dir) / (stem + "_mask.pgm")).string();
    mgfi::write_image(mask_path, mask);
    std::printf("wrote %s\n", mask_path.c_str());
    if (pred.edge.defined()) {
        const std::string edge_path = (fs::path(out_dir) / (stem + "_edge.pgm")).string();
        mgfi::write_image(edge_path, pred.edge);
        std::printf("wrote %s\n", edge_path.c_str());
    }
    return 0;
}

int cmd_gradcheck(const std::string& op, bool all) {
    std::vector<mgfi::GradCheckCase> cases = mgfi::gradcheck_suite();
    bool found = false;
    bool ok = true;
    for (mgfi::GradCheckCase& c : cases) {
        if (!all && c.name != op) continue;
        found = true;
        const mgfi::GradCheckOutcome r = c.run();
        const bool pass = r.max_rel_error <= c.tolerance;
        ok = ok && pass;
        std::printf("%-20s shapes %d  max_rel_err %.3e  tol %.0e  %s\n", c.name.c_str(),
                    r.shapes, r.max_rel_error, c.tolerance, pass ? "PASS" : "FAIL");
    }
    if (!found) {
        std::fprintf(stderr, "no gradcheck case named '%s'\n", op.c_str());
        return 1;
    }
    return ok ? 0 : 3;
}

int cmd_ablate(const std::string& config_path) {
    mgfi::TrainConfig cfg;
    if (!config_path.empty()) cfg = mgfi::train_config_from_json(read_file(config_path));
    auto rows = mgfi::ablate(cfg);
    const std::string csv = mgfi::metrics_csv(rows);
    std::fputs(csv.c_str(), stdout);
    std::ofstream f(fs::path(cfg.out_dir) / "ablation.csv");
    f << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MGFI-Net medical image segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", ckpt, data_dir, split_name = "test";
    std::string image_path, out_csv, op_name;
    bool all_ops = false, oracle = false;

    CLI::App* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
    synth->add_option("--config", config_path, "train config JSON");
    synth->add_option("--out", out_dir, "output directory")->required();

    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_path, "train config JSON");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--split", split_name, "train|val|test");
    eval->add_option("--out", out_csv, "also write CSV here");
    eval->add_flag("--oracle", oracle, "feed labels as logits (debug)");

    CLI::App* infer = app.add_subcommand("infer", "segment one image");
    infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
    infer->add_option("--image", image_path, "input PPM/PGM")->required();
    infer->add_option("--out", out_dir, "output directory")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks");
    gradcheck->add_option("--op", op_name, "single case name");
    gradcheck->add_flag("--all", all_ops, "run every case");

    CLI::App* ablate = app.add_subcommand("ablate", "train and score all variants");
    ablate->add_option("--config", config_path, "train config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth_data(config_path, out_dir);
        if (train->parsed()) return cmd_train(config_path);
        if (eval->parsed()) return cmd_eval(ckpt, data_dir, split_name, out_csv, oracle);
        if (infer->parsed()) return cmd_infer(ckpt, image_path, out_dir);
        if (gradcheck->parsed()) {
            if (!all_ops && op_name.empty()) {
                std::fprintf(stderr, "gradcheck: pass --op NAME or --all\n");
                return 1;
            }
            return cmd_gradcheck(op_name, all_ops);
        }
        if (ablate->parsed()) return cmd_ablate(config_path);
    } catch (const mgfi::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const mgfi::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
