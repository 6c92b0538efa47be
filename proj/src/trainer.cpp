#include "ggnet/trainer.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "ggnet/adam.hpp"
#include "ggnet/config.hpp"

namespace ggnet {

namespace {

ConfigBinder bind_train_config(TrainConfig& c) {
    ConfigBinder b;
    b.bind("channels", c.channels);
    b.bind("actpoints", c.actpoints);
    b.bind("stride", c.stride);
    b.bind("gaze1", c.gaze1);
    b.bind("gaze2", c.gaze2);
    b.bind("hna", c.hna);
    b.bind("apm", c.apm);
    b.bind("weight_activation", c.weight_activation);
    b.bind("lr", c.lr);
    b.bind("batch_size", c.batch_size);
    b.bind("epochs", c.epochs);
    b.bind("decay_epoch", c.decay_epoch);
    b.bind("decay_factor", c.decay_factor);
    b.bind("seed", c.seed);
    b.bind("val_fraction", c.val_fraction);
    b.bind("lambda1", c.lambda1);
    b.bind("lambda2", c.lambda2);
    b.bind("alpha", c.alpha);
    b.bind("beta", c.beta);
    b.bind("gamma", c.gamma);
    b.bind("min_overlap", c.min_overlap);
    b.bind("topk", c.topk);
    b.bind("match_norm", c.match_norm);
    return b;
}

} // namespace

void TrainConfig::normalize() {
    if (!gaze1) gaze2 = false;
    if (lr <= 0 || batch_size <= 0 || epochs <= 0) throw ConfigError("lr, batch_size and epochs must be positive");
    if (decay_factor <= 0) throw ConfigError("decay_factor must be positive");
    if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("val_fraction must lie in [0, 1)");
    if (topk <= 0) throw ConfigError("topk must be positive");
    if (match_norm != "l1" && match_norm != "l2") throw ConfigError("match_norm must be l1 or l2");
    if (weight_activation != "raw" && weight_activation != "sigmoid") {
        throw ConfigError("weight_activation must be raw or sigmoid");
    }
}

ModelConfig TrainConfig::model_config(int verbs, int objects, int height, int width) const {
    ModelConfig m;
    m.verbs = verbs;
    m.objects = objects;
    m.channels = channels;
    m.stride = stride;
    m.actpoints = actpoints;
    m.height = height;
    m.width = width;
    m.gaze1 = gaze1;
    m.gaze2 = gaze1 && gaze2;
    m.apm_per_verb = apm;
    m.weight_activation = weight_activation == "sigmoid" ? WeightActivation::sigmoid : WeightActivation::raw;
    m.validate();
    return m;
}

LossConfig TrainConfig::loss_config() const {
    LossConfig l;
    l.alpha = alpha;
    l.beta = beta;
    l.gamma = gamma;
    l.lambda1 = lambda1;
    l.lambda2 = lambda2;
    l.min_overlap = min_overlap;
    l.hna = hna;
    return l;
}

DecoderConfig TrainConfig::decoder_config() const {
    DecoderConfig d;
    d.k = topk;
    d.norm = match_norm == "l2" ? MatchNorm::l2 : MatchNorm::l1;
    return d;
}

TrainConfig parse_train_config(std::istream& is) {
    TrainConfig c;
    bind_train_config(c).apply(parse_key_values(is));
    c.normalize();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    return parse_train_config(is);
}

void write_train_config(std::ostream& os, const TrainConfig& c) {
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "channels = " << c.channels << "\nactpoints = " << c.actpoints << "\nstride = " << c.stride
       << "\ngaze1 = " << b(c.gaze1) << "\ngaze2 = " << b(c.gaze2) << "\nhna = " << b(c.hna)
       << "\napm = " << b(c.apm) << "\nweight_activation = " << c.weight_activation << "\nlr = " << c.lr
       << "\nbatch_size = " << c.batch_size << "\nepochs = " << c.epochs << "\ndecay_epoch = " << c.decay_epoch
       << "\ndecay_factor = " << c.decay_factor << "\nseed = " << c.seed << "\nval_fraction = " << c.val_fraction
       << "\nlambda1 = " << c.lambda1 << "\nlambda2 = " << c.lambda2 << "\nalpha = " << c.alpha
       << "\nbeta = " << c.beta << "\ngamma = " << c.gamma << "\nmin_overlap = " << c.min_overlap
       << "\ntopk = " << c.topk << "\nmatch_norm = " << c.match_norm << '\n';
}

int worker_threads() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GGNET_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) n = cap;
    }
    return std::max(1, n);
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    threads = std::clamp(threads, 1, std::max(1, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < count; i += threads) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

ImageGradient image_gradient(const Sample& s, const ModelParams<float>& p, const ModelConfig& mc,
                             const HoiCategoryTable& table, const LossConfig& lc) {
    const auto fw = forward_train(s.image, p, mc);
    const std::vector<ImageTargets<float>> targets{build_targets<float>(s.annotations, table, mc, lc)};
    const auto loss = compute_losses(fw, targets, {s.annotations}, mc, lc);
    return {loss.terms, backward(fw, p, mc, loss.grads).flatten()};
}

TripletMap predict(const std::vector<Sample>& samples, const ModelParams<float>& p, const ModelConfig& mc,
                   const HoiCategoryTable& table, const DecoderConfig& dc, int threads) {
    std::vector<std::vector<HoiTriplet>> per(samples.size());
    parallel_for(static_cast<int>(samples.size()), threads, [&](int i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        per[static_cast<std::size_t>(i)] = assemble_triplets(forward_infer(s.image, p, mc), mc, table, dc);
    });
    TripletMap out;
    for (std::size_t i = 0; i < samples.size(); ++i) out[samples[i].id] = std::move(per[i]);
    return out;
}

AnnotationMap ground_truth(const std::vector<Sample>& samples) {
    AnnotationMap out;
    for (const auto& s : samples) out[s.id] = s.annotations;
    return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_validation(const std::vector<Sample>& train, double fraction,
                                                                     std::uint64_t seed) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train.size())));
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(tr_idx.begin(), tr_idx.end());
    std::pair<std::vector<Sample>, std::vector<Sample>> out;
    for (auto i : tr_idx) out.first.push_back(train[i]);
    for (auto i : val_idx) out.second.push_back(train[i]);
    return out;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg_in, const EpochCallback& on_epoch) {
    TrainConfig cfg = cfg_in;
    cfg.normalize();
    const auto mc = cfg.model_config(ds.table.verbs(), ds.table.objects(), ds.height, ds.width);
    const auto lc = cfg.loss_config();
    const auto dc = cfg.decoder_config();
    const int threads = worker_threads();

    const auto [train_set, val_set] = split_validation(ds.train, cfg.val_fraction, cfg.seed);
    if (train_set.empty()) throw DataError("training split is empty");
    const auto val_gt = ground_truth(val_set);

    auto params = init_params<float>(mc, cfg.seed);
    VectorX<float> flat = params.flatten();
    Adam<float> adam(flat.size());
    std::mt19937_64 shuffle_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);

    TrainResult r;
    r.best.model = mc;
    r.best.params = params;
    r.best_val_map = -1;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at(epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const int count = static_cast<int>(end - start);
            std::vector<ImageGradient> grads(static_cast<std::size_t>(count));
            parallel_for(count, threads, [&](int i) {
                grads[static_cast<std::size_t>(i)] =
                    image_gradient(train_set[order[start + static_cast<std::size_t>(i)]], params, mc, ds.table, lc);
            });
            // Fixed-order reduction keeps results independent of the thread count.
            VectorX<float> g = VectorX<float>::Zero(flat.size());
            for (const auto& ig : grads) {
                g += ig.grad;
                loss_sum += ig.terms.total;
            }
            g /= static_cast<float>(count);
            if (adam.step(flat, g, lr)) params.unflatten(flat);
        }

        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = loss_sum / static_cast<double>(train_set.size());
        log.skipped_steps = adam.skipped();
        if (!val_set.empty()) {
            const auto res = evaluate(predict(val_set, params, mc, ds.table, dc, threads), val_gt, ds.table,
                                      EvalMode::dt);
            log.val_map = res.full.value_or(0.0);
        }
        // Without a validation split the last epoch is kept.
        if (val_set.empty() || log.val_map > r.best_val_map) {
            r.best_val_map = log.val_map;
            r.best_epoch = epoch;
            r.best.params = params;
        }
        r.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    r.skipped_steps = adam.skipped();

    const auto test_gt = ground_truth(ds.test);
    const auto dets = predict(ds.test, r.best.params, mc, ds.table, dc, threads);
    for (auto mode : {EvalMode::dt, EvalMode::ko}) {
        const auto m = evaluate(dets, test_gt, ds.table, mode).metrics();
        r.test_metrics.insert(r.test_metrics.end(), m.begin(), m.end());
    }
    r.test_metrics.emplace_back("best_epoch", r.best_epoch);
    r.test_metrics.emplace_back("best_val_map", r.best_val_map);
    r.test_metrics.emplace_back("final_train_loss", r.log.back().train_loss);
    r.test_metrics.emplace_back("skipped_steps", static_cast<double>(r.skipped_steps));
    return r;
}

void save_training(const std::filesystem::path& out_dir, const TrainConfig& cfg, const TrainResult& r) {
    std::filesystem::create_directories(out_dir);
    save_checkpoint(out_dir / "checkpoint.ggt", r.best);
    {
        std::ofstream os(out_dir / "config.txt");
        write_train_config(os, cfg);
    }
    {
        std::ofstream os(out_dir / "train_log.txt");
        os << std::setprecision(std::numeric_limits<double>::max_digits10);
        os << "# epoch lr train_loss val_map skipped_steps\n";
        for (const auto& e : r.log) {
            os << e.epoch << ' ' << e.lr << ' ' << e.train_loss << ' ' << e.val_map << ' ' << e.skipped_steps << '\n';
        }
        if (!os) throw DataError("cannot write " + (out_dir / "train_log.txt").string());
    }
    save_metrics(out_dir / "metrics.txt", out_dir / "metrics.json", r.test_metrics);
}

} // namespace ggnet
