// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only N[,N...]] [--skip N[,N...]]

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "ggnet/gradcheck_suite.hpp"
#include "ggnet/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#ifndef GGNET_CONFIG_DIR
#define GGNET_CONFIG_DIR "configs"
#endif

using namespace ggnet;
using namespace ggnet::oracle;
using namespace ggnet::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
    return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

// 1. Kernels against brute-force oracles.
Outcome kernel_oracles() {
    const auto t0 = Clock::now();
    std::mt19937 rng(101);
    std::uniform_int_distribution<int> dim(3, 9), ch(1, 4), ksel(0, 2), st(1, 2);
    const int trials = 100;
    double worst = 0;
    int bad_nms = 0, bad_topk = 0;
    for (int t = 0; t < trials; ++t) {
        const int k = 1 + 2 * ksel(rng);
        const auto in = random_tensor<double>({1 + t % 2, ch(rng), dim(rng) + 2, dim(rng) + 2}, rng);
        const auto p = random_conv<double>(ch(rng), in.channels(), k, rng, st(rng));
        worst = std::max(worst, max_abs_diff(conv2d(in, p), conv_oracle(in, p)));

        const auto f = random_tensor<double>({1, 2, dim(rng), dim(rng)}, rng);
        for (int s = 0; s < 10; ++s) {
            const double x = std::uniform_real_distribution<double>(-1.5, f.width() + 0.5)(rng);
            const double y = std::uniform_real_distribution<double>(-1.5, f.height() + 0.5)(rng);
            worst = std::max(worst, std::abs(bilinear_sample(f, x, y, 1) - bilinear_oracle(f, 1, x, y)));
        }

        const int dk = 1 + 2 * (t % 3);
        const auto dp = random_conv<double>(ch(rng), f.channels(), dk, rng);
        const auto off = random_tensor<double>({1, 2 * dk * dk, f.height(), f.width()}, rng, -2.5, 2.5);
        const auto wts = random_tensor<double>({1, dk * dk, f.height(), f.width()}, rng);
        worst = std::max(worst, max_abs_diff(deform_aggregate(f, off, wts, dp), deform_oracle(f, off, wts, dp)));

        // quantised heatmaps produce plateaus and ties
        auto h = random_tensor<float>({1, 3, dim(rng), dim(rng)}, rng, 0, 1);
        if (t % 2 == 0) {
            for (auto& v : h.data()) v = std::round(v * 8.0f) / 8.0f;
        }
        if (!(maxpool_nms(h).data() == maxpool_oracle(h).data())) ++bad_nms;
        const int kk = 1 + t % 40;
        if (topk(h, kk) != topk_oracle(h, kk)) ++bad_topk;
    }
    const double secs = seconds_since(t0);
    const bool pass = worst <= 1e-6 && bad_nms == 0 && bad_topk == 0 && secs < 60;
    return {pass, std::to_string(trials) + " instances per kernel, max |diff| " + fmt(worst) + ", nms mismatches " +
                      std::to_string(bad_nms) + ", topk mismatches " + std::to_string(bad_topk) + ", " +
                      fmt(secs) + " s"};
}

// 2. Central finite differences for every backward pass.
Outcome gradients() {
    const auto t0 = Clock::now();
    const int seeds = 10;
    bool all = true;
    std::string worst_op;
    double worst = 0;
    for (const auto& op : gradcheck_ops()) {
        for (int s = 0; s < seeds; ++s) {
            const auto r = run_gradcheck(op, s);
            all = all && r.passed;
            if (r.max_rel_error >= worst) {
                worst = r.max_rel_error;
                worst_op = op;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {all && secs < 300, std::to_string(gradcheck_ops().size()) + " ops x " + std::to_string(seeds) +
                                   " seeds, worst rel error " + fmt(worst) + " (" + worst_op + "), " + fmt(secs) +
                                   " s"};
}

// 3. Zero offsets and unit ActPoint weights reduce the gaze steps to plain convolutions.
Outcome degeneration() {
    ModelConfig cfg;
    float worst = 0;
    for (int seed = 0; seed < 5; ++seed) {
        std::mt19937 rng(300 + seed);
        auto p = init_params<float>(cfg, 300 + seed);
        for (auto* c : {&p.gaze1_offset, &p.gaze2_offset}) {
            c->weight.fill(0.0f);
            c->bias.setZero();
            c->bias.segment(2 * cfg.actpoints, cfg.actpoints).setConstant(1.0f);
        }
        const auto image = random_tensor<float>({2, 3, cfg.height, cfg.width}, rng, 0, 1);
        const auto out = forward_train(image, p, cfg);
        const auto f1 = conv2d(out.F0, p.gaze1_agg);
        const auto g1 = conv2d(f1, p.gaze2_g1agg);
        const auto f2 = conv2d(f1, p.gaze2_agg);
        worst = std::max({worst, (f1.data() - out.F1.data()).cwiseAbs().maxCoeff(),
                          (g1.data() - out.G1.data()).cwiseAbs().maxCoeff(),
                          (f2.data() - out.F2.data()).cwiseAbs().maxCoeff()});
    }
    return {worst == 0.0f, "5 seeds, max |F - stacked 5x5 conv| = " + fmt(worst)};
}

// Plain focal loss written per pixel: positives at M == 1, (1 - M)^gamma elsewhere.
double centernet_oracle(const Tensor<double>& p, const Tensor<double>& m, double alpha, double gamma, int n) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += m[i] == 1.0 ? std::pow(1 - p[i], alpha) * std::log(p[i])
                         : std::pow(1 - m[i], gamma) * std::pow(p[i], alpha) * std::log(1 - p[i]);
    }
    return -s / std::max(n, 1);
}

// 4. Hard-negative attentive loss.
Outcome hna() {
    std::mt19937 rng(400);
    double worst = 0, worst_focal = 0;
    for (int t = 0; t < 50; ++t) {
        const auto p = random_tensor<double>({1, 3, 6, 7}, rng, 0.001, 0.999);
        auto m = random_tensor<double>({1, 3, 6, 7}, rng, -1, 1);
        std::uniform_int_distribution<std::size_t> at(0, m.size() - 1);
        for (int k = 0; k < 3; ++k) m[at(rng)] = 1.0;
        for (int k = 0; k < 3; ++k) m[at(rng)] = -1.0;
        const int n = 1 + t % 4;
        worst = std::max(worst, std::abs(hna_loss(p, m, 2, 7, 4, n).value - hna_oracle(p, m, 2, 7, 4, n)));
        // without negatives the loss is the plain focal loss
        auto mp = m;
        for (auto& v : mp.data()) v = std::abs(v);
        worst_focal =
            std::max({worst_focal, std::abs(hna_loss(p, mp, 2, 7, 4, n).value - centernet_oracle(p, mp, 2, 4, n)),
                      std::abs(centernet_focal(p, mp, 2, 4, n).value - centernet_oracle(p, mp, 2, 4, n))});
    }
    Tensor<double> half(1, 1, 1, 1, 0.5), neg(1, 1, 1, 1, -1.0), zero(1, 1, 1, 1, 0.0);
    const double ratio = hna_loss(half, neg, 2, 7, 4, 1).value / hna_loss(half, zero, 2, 7, 4, 1).value;
    const bool pass = worst <= 1e-6 && worst_focal <= 1e-6 && ratio == 128.0;
    return {pass, "50 pairs, max |diff| " + fmt(worst) + ", hard/plain ratio " + fmt(ratio) +
                      ", no-negative vs focal max |diff| " + fmt(worst_focal)};
}

// 5. Signed interaction mask.
Outcome mask() {
    std::mt19937 rng(500);
    double worst = 0;
    int bad_center = 0, overridden = 0;
    for (int t = 0; t < 50; ++t) {
        const auto table = random_table(rng, 4, 3);
        const auto annos = random_annotations(rng, table, 1 + t % 5, 64.0);
        const auto m = build_mask<double>(annos, table, 16, 16, 4);
        worst = std::max(worst, max_abs_diff(m, mask_oracle(annos, table, 16, 16, 4, 0.7)));
        for (int v = 0; v < 4; ++v)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    if (m(0, v, y, x) != -1.0) continue;
                    bool justified = false;
                    for (const auto& a : annos) {
                        const auto [fx, fy] = a.interaction_point(4);
                        const auto cell = feature_cell(fx, fy, 16, 16);
                        justified = justified || (cell == std::pair{x, y} && a.verb != v &&
                                                  table.is_meaningful(v, a.object_class));
                    }
                    if (!justified) ++bad_center;
                }
        for (const auto& a : annos) {
            const auto [fx, fy] = a.interaction_point(4);
            const auto [x, y] = feature_cell(fx, fy, 16, 16);
            if (m(0, a.verb, y, x) != 1.0) ++overridden;
        }
    }
    return {worst <= 1e-12 && bad_center == 0 && overridden == 0,
            "50 instances, max |diff| " + fmt(worst) + ", -1 centres on non-meaningful pairs " +
                std::to_string(bad_center) + ", overridden positives " + std::to_string(overridden)};
}

// 6. Point matching.
Outcome matching() {
    std::mt19937 rng(600);
    std::uniform_int_distribution<int> pos(0, 15), cnt(1, 50), ch(0, 2), q(1, 4);
    std::uniform_real_distribution<double> off(-5, 5);
    int mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<PointCandidate> cands;
        const int n = cnt(rng);
        for (int i = 0; i < n; ++i) cands.push_back({q(rng) / 4.0, ch(rng), pos(rng), pos(rng)});
        const int ix = pos(rng), iy = pos(rng);
        const double dx = t % 2 ? std::round(off(rng)) : off(rng);
        const double dy = t % 2 ? std::round(off(rng)) : off(rng);
        if (!(*match_point(ix, iy, dx, dy, cands) == *match_oracle(ix, iy, dx, dy, cands))) ++mismatches;
        if (!(*match_point(ix, iy, dx, dy, cands, MatchNorm::l2) == *match_oracle(ix, iy, dx, dy, cands, true))) {
            ++mismatches;
        }
    }
    // A: score 1 at distance 2 (cost 2). B: score 0.25 at distance 1 (cost 4).
    const PointCandidate a{1.0, 0, 6, 10}, b{0.25, 0, 7, 10};
    const bool a_wins = match_point(10, 10, 2, 0, {b, a}) == a && match_cost(8, 10, a, MatchNorm::l1) == 2.0 &&
                        match_cost(8, 10, b, MatchNorm::l1) == 4.0;
    return {mismatches == 0 && a_wins, "1000 sets, mismatches " + std::to_string(mismatches) +
                                           ", A (cost 2) beats nearer B (cost 4): " + (a_wins ? "yes" : "no")};
}

// 7. Average precision.
Outcome ap() {
    bool ok = true;
    std::string why;
    auto expect = [&](bool c, const std::string& what) {
        if (!c) {
            ok = false;
            why += " " + what;
        }
    };
    expect(std::abs(ap_from_flags({true, false, true}, 2) - 5.0 / 6.0) < 1e-12, "5/6");
    expect(ap_from_flags({true, true}, 2) == 1.0, "perfect");
    expect(ap_from_flags({}, 2) == 0.0, "empty");

    // Random scenes: KO never scores below DT, and equals it without detections on images lacking the object.
    std::mt19937 rng(700);
    int ko_below = 0, unequal = 0;
    for (int t = 0; t < 200; ++t) {
        const auto table = random_table(rng, 3, 3);
        AnnotationMap gts;
        TripletMap dets, dets_in_scope;
        std::uniform_real_distribution<double> u(0, 1);
        for (int i = 0; i < 6; ++i) {
            const std::string id = "img" + std::to_string(i);
            gts[id] = random_annotations(rng, table, 1 + i % 3, 64.0);
            std::set<int> objs;
            for (const auto& a : gts[id]) objs.insert(a.object_class);
            for (const auto& a : gts[id]) {
                const Box h = u(rng) < 0.7 ? a.human : random_box(rng, 64.0);
                dets[id].push_back({h, a.object, a.verb, a.object_class, u(rng)});
            }
            for (const auto& [v, o] : table.meaningful()) {
                if (u(rng) < 0.3) dets[id].push_back({random_box(rng, 64.0), random_box(rng, 64.0), v, o, u(rng)});
            }
            for (const auto& d : dets[id]) {
                if (objs.count(d.object_class)) dets_in_scope[id].push_back(d);
            }
        }
        const auto dt = evaluate(dets, gts, table, EvalMode::dt);
        const auto ko = evaluate(dets, gts, table, EvalMode::ko);
        for (const auto& [cat, v] : dt.ap) {
            if (ko.ap.at(cat) < v - 1e-12) ++ko_below;
        }
        const auto dt2 = evaluate(dets_in_scope, gts, table, EvalMode::dt);
        const auto ko2 = evaluate(dets_in_scope, gts, table, EvalMode::ko);
        if (dt2.ap != ko2.ap) ++unequal;
    }
    expect(ko_below == 0, "ko<dt");
    expect(unequal == 0, "ko!=dt in scope");
    return {ok, "5/6, perfect and empty cases; 200 random scenes with KO below DT " + std::to_string(ko_below) +
                    ", KO != DT without out-of-scope detections " + std::to_string(unequal) + why};
}

// 8. Ablation ordering.
Outcome ablation() {
    const auto t0 = Clock::now();
    const auto spec_base = load_scene_spec(fs::path(GGNET_CONFIG_DIR) / "ablation_scene.txt");
    const auto full = load_train_config(fs::path(GGNET_CONFIG_DIR) / "ablation_train.txt");
    const char* names[5] = {"baseline", "+HNA", "+Gaze1", "+Gaze2", "full"};
    double sum[5] = {};
    const int seeds = 3;
    for (int seed = 1; seed <= seeds; ++seed) {
        auto spec = spec_base;
        spec.seed = static_cast<std::uint64_t>(seed);
        const auto ds = make_dataset(spec);
        for (int v = 0; v < 5; ++v) {
            auto cfg = full;
            cfg.seed = static_cast<std::uint64_t>(seed);
            cfg.hna = v >= 1;
            cfg.gaze1 = v >= 2;
            cfg.gaze2 = v >= 3;
            cfg.apm = v >= 4;
            const auto r = train(ds, cfg);
            double map = 0;
            for (const auto& [k, x] : r.test_metrics) {
                if (k == "dt_full_map") map = x;
            }
            sum[v] += map;
            std::cout << "  [8] seed " << seed << ' ' << std::setw(8) << names[v] << " test mAP " << fmt(100 * map)
                      << std::endl;
        }
    }
    double mean[5];
    for (int v = 0; v < 5; ++v) mean[v] = 100 * sum[v] / seeds;
    const double secs = seconds_since(t0);
    const bool ordered = mean[0] < mean[1] && mean[1] < mean[2] && mean[2] < mean[3] && mean[3] <= mean[4];
    const bool pass = ordered && mean[4] - mean[0] >= 2.0 && secs < 1800;
    std::string d = "mean mAP";
    for (int v = 0; v < 5; ++v) d += std::string(v ? "," : "") + " " + names[v] + " " + fmt(mean[v]);
    return {pass, d + "; " + fmt(secs) + " s"};
}

// 9. Inference graph.
Outcome inference_graph() {
    bool equal = true;
    int fewer = 0, runs = 0;
    for (int seed = 0; seed < 5; ++seed) {
        ModelConfig cfg;
        cfg.gaze2 = seed % 2 == 0;
        std::mt19937 rng(900 + seed);
        auto p = init_params<float>(cfg, 900 + seed);
        std::normal_distribution<float> nd(0.0f, 0.05f);
        for (auto* c : {&p.gaze1_offset, &p.gaze2_offset}) {
            for (auto& v : c->weight.data()) v = nd(rng);
        }
        const auto image = random_tensor<float>({2, 3, cfg.height, cfg.width}, rng, 0, 1);
        const auto tr = forward_train(image, p, cfg);
        const auto in = forward_infer(image, p, cfg);
        equal = equal && in.interaction_heatmap().data() == tr.interaction_heatmap().data() &&
                in.apm_offsets.data() == tr.apm_offsets.data() && in.det_center.data() == tr.det_center.data() &&
                in.det_wh.data() == tr.det_wh.data() && in.det_reg.data() == tr.det_reg.data();
        if (in.conv_calls < tr.conv_calls) ++fewer;
        ++runs;
    }
    return {equal && fewer == runs, "5 models: shared outputs bitwise equal: " + std::string(equal ? "yes" : "no") +
                                        ", fewer conv calls in " + std::to_string(fewer) + "/" +
                                        std::to_string(runs)};
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// 10. Same seed and config give identical files.
Outcome reproducibility() {
    setenv("GGNET_THREADS", "1", 1);
    SceneSpec spec;
    spec.n_train = 40;
    spec.n_test = 20;
    const auto ds = make_dataset(spec);
    TrainConfig cfg;
    cfg.channels = 8;
    cfg.epochs = 3;
    cfg.decay_epoch = 2;
    cfg.lr = 1e-3;
    const auto base = fs::temp_directory_path() / "ggnet_acceptance_repro";
    fs::remove_all(base);
    save_training(base / "a", cfg, train(ds, cfg));
    save_training(base / "b", cfg, train(ds, cfg));
    unsetenv("GGNET_THREADS");
    int differing = 0;
    for (const char* f : {"checkpoint.ggt", "checkpoint.manifest", "metrics.txt", "metrics.json"}) {
        const auto a = read_file(base / "a" / f);
        if (a.empty() || a != read_file(base / "b" / f)) ++differing;
    }
    fs::remove_all(base);
    return {differing == 0, "two single-threaded runs, differing files " + std::to_string(differing) + "/4"};
}

std::set<int> parse_list(const std::string& s) {
    std::set<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> only, skip;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--only") {
            only = parse_list(argv[i + 1]);
        } else if (flag == "--skip") {
            skip = parse_list(argv[i + 1]);
        } else {
            std::cerr << "usage: acceptance [--only N,...] [--skip N,...]\n";
            return 2;
        }
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"kernel oracles", kernel_oracles}, {"gradients", gradients},
        {"degeneration", degeneration},     {"hna_loss", hna},
        {"build_mask", mask},               {"match_point", matching},
        {"average precision", ap},          {"ablation ordering", ablation},
        {"inference graph", inference_graph}, {"reproducibility", reproducibility}};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if ((!only.empty() && only.count(id) == 0) || skip.count(id) != 0) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
