// ggnet command line: train, infer, eval, gradcheck, synth, visualize.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

#include "ggnet/gradcheck_suite.hpp"
#include "ggnet/tensor_io.hpp"
#include "ggnet/trainer.hpp"
#include "ggnet/visualize.hpp"

namespace fs = std::filesystem;
using namespace ggnet;

namespace {

int cmd_train(const fs::path& config, const fs::path& data, const fs::path& out) {
    const auto cfg = load_train_config(config);
    const auto ds = load_dataset(data);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train(ds, cfg, [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss << " val_map " << e.val_map
                  << std::endl;
    });
    save_training(out, cfg, r);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "best epoch " << r.best_epoch << " val_map " << r.best_val_map << " (" << secs << " s)\n";
    write_metrics_text(std::cout, r.test_metrics);
    return 0;
}

int cmd_infer(const fs::path& ckpt, const fs::path& data, const fs::path& out, const std::string& split, int topk) {
    const auto ck = load_checkpoint(ckpt);
    const auto ds = load_dataset(data);
    const auto& samples = split == "train" ? ds.train : ds.test;
    DecoderConfig dc;
    dc.k = topk;
    const auto dets = predict(samples, ck.params, ck.model, ds.table, dc, worker_threads());
    fs::create_directories(out);
    std::ofstream os(out / "triplets.txt");
    if (!os) throw DataError("cannot write " + (out / "triplets.txt").string());
    os << "# image_id verb object_class score x1h y1h x2h y2h x1o y1o x2o y2o\n";
    std::size_t n = 0;
    for (const auto& [id, list] : dets) {
        write_triplets(os, id, list);
        n += list.size();
    }
    std::cout << "wrote " << n << " triplets for " << dets.size() << " images to " << (out / "triplets.txt") << '\n';
    return 0;
}

int cmd_eval(const fs::path& dets_path, const fs::path& gt, const std::string& mode, const std::string& split,
             const fs::path& out) {
    const auto dets = load_triplets(dets_path);
    HoiCategoryTable table;
    AnnotationMap gts;
    if (fs::exists(gt / "manifest.txt")) {
        const auto ds = load_dataset(gt);
        table = ds.table;
        gts = ground_truth(split == "train" ? ds.train : ds.test);
    } else {
        table = load_table(gt / "table.txt");
        gts = load_annotations(gt / "annos");
    }
    const auto r = evaluate(dets, gts, table, parse_mode(mode));
    const auto m = r.metrics();
    write_metrics_text(std::cout, m);
    if (!out.empty()) {
        fs::create_directories(out);
        save_metrics(out / ("metrics_" + mode + ".txt"), out / ("metrics_" + mode + ".json"), m);
    }
    return 0;
}

int cmd_gradcheck(const std::string& op, int seeds) {
    std::vector<std::string> ops;
    if (op.empty()) {
        ops = gradcheck_ops();
    } else {
        ops.push_back(op);
    }
    bool all = true;
    for (const auto& name : ops) {
        GradCheckReport worst;
        for (int s = 0; s < seeds; ++s) worst = s == 0 ? run_gradcheck(name, s) : merge_reports(worst, run_gradcheck(name, s));
        std::cout << name << ' ' << worst.summary() << '\n';
        all = all && worst.passed;
    }
    return all ? 0 : 1;
}

int cmd_synth(const fs::path& config, const fs::path& out) {
    const auto spec = load_scene_spec(config);
    const auto ds = make_dataset(spec);
    save_dataset(ds, out);
    std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size() << " test images to " << out << '\n';
    return 0;
}

int cmd_visualize(const fs::path& ckpt, const fs::path& image, const fs::path& out, int count) {
    const auto ck = load_checkpoint(ckpt);
    const auto img = load_tensor(image);
    const auto v = visualize(img, ck, count);
    save_ppm(out, v.canvas);
    for (const auto& iv : v.interactions) {
        std::cout << "verb " << iv.point.channel << " at (" << iv.point.x << ", " << iv.point.y << ") score "
                  << iv.point.score << ", " << iv.steps.size() << " gaze steps\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GGNet human-object interaction detector"};
    app.require_subcommand(1);

    fs::path config, data, out, ckpt, dets, gt, image;
    std::string mode = "dt", split = "test", op;
    int topk = 100, seeds = 10, count = 1;

    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset directory");
    train_cmd->add_option("--config", config, "training config (key = value)")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--out", out, "output directory")->required();

    auto* infer_cmd = app.add_subcommand("infer", "write triplet detections for a dataset split");
    infer_cmd->add_option("--ckpt", ckpt, "checkpoint .ggt or training output directory")->required();
    infer_cmd->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    infer_cmd->add_option("--out", out, "output directory")->required();
    infer_cmd->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
    infer_cmd->add_option("--topk", topk, "candidates per heatmap")->check(CLI::PositiveNumber);

    auto* eval_cmd = app.add_subcommand("eval", "score triplet detections");
    eval_cmd->add_option("--dets", dets, "triplet file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--gt", gt, "dataset directory, or a directory with table.txt and annos/")
        ->required()
        ->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--mode", mode, "dt or ko")->check(CLI::IsMember({"dt", "ko"}));
    eval_cmd->add_option("--split", split, "dataset split when --gt is a dataset")
        ->check(CLI::IsMember({"train", "test"}));
    eval_cmd->add_option("--out", out, "directory for metrics_<mode>.txt/.json");

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference checks of backward passes");
    grad_cmd->add_option("--op", op, "single op to check")->check(CLI::IsMember(gradcheck_ops()));
    grad_cmd->add_option("--seeds", seeds, "random problems per op")->check(CLI::PositiveNumber);

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--config", config, "scene spec (key = value)")->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--out", out, "dataset directory")->required();

    auto* vis_cmd = app.add_subcommand("visualize", "draw interaction points and ActPoints as a PPM");
    vis_cmd->add_option("--ckpt", ckpt, "checkpoint .ggt or training output directory")->required();
    vis_cmd->add_option("--image", image, "GGT1 image (1, 3, H, W)")->required()->check(CLI::ExistingFile);
    vis_cmd->add_option("--out", out, "output .ppm")->required();
    vis_cmd->add_option("--count", count, "interaction points to draw")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) return cmd_train(config, data, out);
        if (*infer_cmd) return cmd_infer(ckpt, data, out, split, topk);
        if (*eval_cmd) return cmd_eval(dets, gt, mode, split, out);
        if (*grad_cmd) return cmd_gradcheck(op, seeds);
        if (*synth_cmd) return cmd_synth(config, out);
        if (*vis_cmd) return cmd_visualize(ckpt, image, out, count);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
