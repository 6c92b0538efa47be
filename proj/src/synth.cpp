#include "ggnet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <iomanip>
#include <sstream>

#include "ggnet/config.hpp"
#include "ggnet/errors.hpp"
#include "ggnet/tensor_io.hpp"

namespace ggnet {

std::vector<VerbSignature> SceneSpec::signatures() const {
    const double step = angle_step > 0 ? angle_step : 360.0 / verbs;
    static constexpr std::array<Texture, 4> kTextures = {Texture::h_stripes, Texture::v_stripes, Texture::checker,
                                                         Texture::solid};
    std::vector<VerbSignature> out;
    for (int v = 0; v < verbs; ++v) out.push_back({v * step, distance, kTextures[static_cast<std::size_t>(v) % 4]});
    return out;
}

HoiCategoryTable SceneSpec::category_table() const {
    HoiCategoryTable t(verbs, objects);
    for (int v = 0; v < verbs; ++v) {
        t.add_meaningful(v, v % objects);
        t.add_meaningful(v, (v + 1) % objects);
    }
    return t;
}

void SceneSpec::validate() const {
    if (verbs < 1 || objects < 2) throw ConfigError("synth: need at least 1 verb and 2 object classes");
    if (height < 32 || width < 32) throw ConfigError("synth: image must be at least 32x32");
    if (instances_min < 1 || instances_max < instances_min) throw ConfigError("synth: bad instance range");
    if (distance <= 0 || jitter < 0 || noise < 0) throw ConfigError("synth: distance, jitter, noise must be >= 0");
    if (rare_fraction < 0 || rare_fraction > 1) throw ConfigError("synth: rare_fraction must be in [0, 1]");
    if (rare_cap < 0 || rare_cap >= 10) throw ConfigError("synth: rare_cap must be in [0, 9]");
    if (n_train < 0 || n_test < 0) throw ConfigError("synth: negative split size");
    const double step = angle_step > 0 ? angle_step : 360.0 / verbs;
    if (verbs > 1 && (step < 30.0 || step * (verbs - 1) > 330.0 + 1e-9)) {
        throw ConfigError("synth: verb directions must be at least 30 degrees apart");
    }
}

namespace {

ConfigBinder scene_binder(SceneSpec& s) {
    ConfigBinder b;
    b.bind("seed", s.seed);
    b.bind("height", s.height);
    b.bind("width", s.width);
    b.bind("verbs", s.verbs);
    b.bind("objects", s.objects);
    b.bind("instances_min", s.instances_min);
    b.bind("instances_max", s.instances_max);
    b.bind("distance", s.distance);
    b.bind("jitter", s.jitter);
    b.bind("angle_step", s.angle_step);
    b.bind("noise", s.noise);
    b.bind("rare_fraction", s.rare_fraction);
    b.bind("rare_cap", s.rare_cap);
    b.bind("n_train", s.n_train);
    b.bind("n_test", s.n_test);
    return b;
}

} // namespace

SceneSpec parse_scene_spec(std::istream& is) {
    SceneSpec s;
    scene_binder(s).apply(parse_key_values(is));
    s.validate();
    return s;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open synth config " + path.string());
    return parse_scene_spec(is);
}

void write_scene_spec(std::ostream& os, const SceneSpec& s) {
    os << "seed = " << s.seed << "\nheight = " << s.height << "\nwidth = " << s.width << "\nverbs = " << s.verbs
       << "\nobjects = " << s.objects << "\ninstances_min = " << s.instances_min
       << "\ninstances_max = " << s.instances_max << "\ndistance = " << s.distance << "\njitter = " << s.jitter
       << "\nangle_step = " << s.angle_step << "\nnoise = " << s.noise << "\nrare_fraction = " << s.rare_fraction
       << "\nrare_cap = " << s.rare_cap << "\nn_train = " << s.n_train << "\nn_test = " << s.n_test << '\n';
}

std::pair<double, double> sample_displacement(const SceneSpec& spec, int verb, std::mt19937_64& rng) {
    const auto sig = spec.signatures().at(static_cast<std::size_t>(verb));
    const double a = sig.angle_deg * std::numbers::pi / 180.0;
    std::normal_distribution<double> n(0.0, spec.jitter);
    return {sig.distance * std::cos(a) + n(rng), sig.distance * std::sin(a) + n(rng)};
}

std::mt19937_64 scene_rng(std::uint64_t seed, int split, int index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(index)};
    return std::mt19937_64(seq);
}

namespace {

std::array<float, 3> object_colour(int object_class, int objects) {
    static constexpr std::array<std::array<float, 3>, 3> kBase = {
        {{0.9f, 0.2f, 0.2f}, {0.2f, 0.85f, 0.2f}, {0.25f, 0.35f, 0.95f}}};
    if (objects <= 3) return kBase[static_cast<std::size_t>(object_class)];
    // evenly spaced hues for larger vocabularies
    const double h = 6.0 * object_class / objects;
    const int i = static_cast<int>(h) % 6;
    const auto f = static_cast<float>(h - std::floor(h));
    const float q = 1 - f;
    const std::array<std::array<float, 3>, 6> rgb = {
        {{1, f, 0}, {q, 1, 0}, {0, 1, f}, {0, q, 1}, {f, 0, 1}, {1, 0, q}}};
    auto c = rgb[static_cast<std::size_t>(i)];
    for (auto& v : c) v = 0.15f + 0.8f * v;
    return c;
}

float texture_gain(Texture t, int dx, int dy) {
    switch (t) {
    case Texture::h_stripes: return dy % 2 == 0 ? 1.0f : 0.35f;
    case Texture::v_stripes: return dx % 2 == 0 ? 1.0f : 0.35f;
    case Texture::checker: return ((dx / 2) + (dy / 2)) % 2 == 0 ? 1.0f : 0.35f;
    case Texture::solid: break;
    }
    return 1.0f;
}

struct IntBox {
    int x1, y1, x2, y2;  // pixels [x1, x2) x [y1, y2)

    [[nodiscard]] bool inside(int w, int h) const { return x1 >= 0 && y1 >= 0 && x2 <= w && y2 <= h; }
    [[nodiscard]] bool overlaps(const IntBox& o, int gap) const {
        return x1 < o.x2 + gap && o.x1 < x2 + gap && y1 < o.y2 + gap && o.y1 < y2 + gap;
    }
    [[nodiscard]] Box box() const { return {double(x1), double(y1), double(x2), double(y2)}; }
};

Scene generate_scene_impl(const SceneSpec& spec, std::mt19937_64& rng,
                          const std::vector<HoiCategoryTable::Pair>& allowed,
                          std::map<HoiCategoryTable::Pair, int>* budget) {
    spec.validate();
    const auto sigs = spec.signatures();
    Scene scene;
    scene.image = Tensor<float>(1, 3, spec.height, spec.width);
    std::uniform_real_distribution<double> bg(-spec.noise, spec.noise);
    for (std::size_t i = 0; i < scene.image.size(); ++i) scene.image[i] = static_cast<float>(0.2 + bg(rng));

    std::uniform_int_distribution<int> count_dist(spec.instances_min, spec.instances_max);
    std::uniform_int_distribution<int> hw(8, 12), hh(12, 18), osz(8, 12);
    const int count = count_dist(rng);
    std::vector<IntBox> placed;
    struct Instance {
        IntBox human, object;
        int verb, object_class;
    };
    std::vector<Instance> instances;
    for (int i = 0; i < count; ++i) {
        std::vector<HoiCategoryTable::Pair> usable;
        for (const auto& p : allowed) {
            if (budget == nullptr || !budget->count(p) || budget->at(p) > 0) usable.push_back(p);
        }
        if (usable.empty()) break;
        const auto [verb, oc] = usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            const int w = hw(rng), h = hh(rng);
            const int x = std::uniform_int_distribution<int>(0, spec.width - w)(rng);
            const int y = std::uniform_int_distribution<int>(0, spec.height - h)(rng);
            const IntBox human{x, y, x + w, y + h};
            const auto [dx, dy] = sample_displacement(spec, verb, rng);
            const int ow = osz(rng), oh = osz(rng);
            const double ocx = x + w / 2.0 + dx, ocy = y + h / 2.0 + dy;
            const int ox = static_cast<int>(std::lround(ocx - ow / 2.0));
            const int oy = static_cast<int>(std::lround(ocy - oh / 2.0));
            const IntBox object{ox, oy, ox + ow, oy + oh};
            if (!object.inside(spec.width, spec.height) || human.overlaps(object, 1)) continue;
            bool clash = false;
            for (const auto& p : placed) clash = clash || p.overlaps(human, 1) || p.overlaps(object, 1);
            if (clash) continue;
            placed.push_back(human);
            placed.push_back(object);
            instances.push_back({human, object, verb, oc});
            if (budget != nullptr && budget->count({verb, oc})) --(*budget)[{verb, oc}];
            ok = true;
        }
    }

    auto& img = scene.image;
    for (const auto& inst : instances) {
        const auto& b = inst.human;
        for (int y = b.y1; y < b.y2; ++y)
            for (int x = b.x1; x < b.x2; ++x) {
                const bool border = y == b.y1 || y == b.y2 - 1 || x == b.x1 || x == b.x2 - 1;
                img(0, 0, y, x) = border ? 0.5f : 0.95f;
                img(0, 1, y, x) = border ? 0.4f : 0.8f;
                img(0, 2, y, x) = border ? 0.3f : 0.65f;
            }
        const auto colour = object_colour(inst.object_class, spec.objects);
        const auto tex = sigs[static_cast<std::size_t>(inst.verb)].texture;
        const auto& o = inst.object;
        for (int y = o.y1; y < o.y2; ++y)
            for (int x = o.x1; x < o.x2; ++x) {
                const float g = texture_gain(tex, x - o.x1, y - o.y1);
                for (int c = 0; c < 3; ++c) img(0, c, y, x) = colour[static_cast<std::size_t>(c)] * g;
            }
        scene.annotations.push_back({b.box(), o.box(), inst.verb, inst.object_class});
    }
    return scene;
}

} // namespace

Scene generate_scene(const SceneSpec& spec, std::mt19937_64& rng,
                     const std::vector<HoiCategoryTable::Pair>& allowed) {
    return generate_scene_impl(spec, rng, allowed, nullptr);
}

Scene generate_scene(const SceneSpec& spec, std::mt19937_64& rng) {
    const auto t = spec.category_table();
    return generate_scene(spec, rng, {t.meaningful().begin(), t.meaningful().end()});
}

namespace {

std::string sample_id(const char* split, int i) {
    std::ostringstream os;
    os << split << '_' << std::setw(5) << std::setfill('0') << i;
    return os.str();
}

} // namespace

Dataset make_dataset(const SceneSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.table = spec.category_table();
    ds.height = spec.height;
    ds.width = spec.width;
    std::vector<HoiCategoryTable::Pair> cats(ds.table.meaningful().begin(), ds.table.meaningful().end());

    auto pick_rng = scene_rng(spec.seed, 2, 0);
    auto shuffled = cats;
    std::shuffle(shuffled.begin(), shuffled.end(), pick_rng);
    auto num_rare = static_cast<std::size_t>(std::lround(spec.rare_fraction * static_cast<double>(cats.size())));
    if (spec.rare_fraction > 0) num_rare = std::max<std::size_t>(num_rare, 1);
    num_rare = std::min(num_rare, cats.size() - 1);
    std::map<HoiCategoryTable::Pair, int> budget;
    for (std::size_t i = 0; i < num_rare; ++i) {
        ds.table.set_rare(shuffled[i].first, shuffled[i].second, true);
        budget[shuffled[i]] = spec.rare_cap;
    }

    for (int i = 0; i < spec.n_train; ++i) {
        auto rng = scene_rng(spec.seed, 0, i);
        auto s = generate_scene_impl(spec, rng, cats, &budget);
        ds.train.push_back({sample_id("train", i), std::move(s.image), std::move(s.annotations)});
    }
    for (int i = 0; i < spec.n_test; ++i) {
        auto rng = scene_rng(spec.seed, 1, i);
        auto s = generate_scene_impl(spec, rng, cats, nullptr);
        ds.test.push_back({sample_id("test", i), std::move(s.image), std::move(s.annotations)});
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "annos");
    std::ofstream manifest(dir / "manifest.txt");
    std::ofstream table(dir / "table.txt");
    if (!manifest || !table) throw DataError("cannot write dataset to " + dir.string());
    write_table(table, ds.table);
    manifest << "# split id\nsize " << ds.height << ' ' << ds.width << '\n';
    auto write_split = [&](const char* split, const std::vector<Sample>& samples) {
        for (const auto& s : samples) {
            save_tensor(dir / "images" / (s.id + ".ggt"), s.image);
            std::ofstream a(dir / "annos" / (s.id + ".txt"));
            if (!a) throw DataError("cannot write annotations for " + s.id);
            write_annotations(a, s.id, s.annotations);
            manifest << split << ' ' << s.id << '\n';
        }
    };
    write_split("train", ds.train);
    write_split("test", ds.test);
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw DataError("dataset " + dir.string() + " has no manifest.txt");
    Dataset ds;
    ds.table = load_table(dir / "table.txt");
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "size") {
            ls >> ds.height >> ds.width;
            continue;
        }
        std::string id;
        if (!(ls >> id) || (key != "train" && key != "test")) throw DataError("manifest: malformed line: " + line);
        Sample s;
        s.id = id;
        s.image = load_tensor(dir / "images" / (id + ".ggt"));
        AnnotationMap annos;
        std::ifstream a(dir / "annos" / (id + ".txt"));
        if (!a) throw DataError("missing annotations for " + id);
        read_annotations(a, annos);
        s.annotations = annos[id];
        for (const auto& an : s.annotations) ds.table.validate(an);
        if (s.image.channels() != 3 || s.image.height() != ds.height || s.image.width() != ds.width) {
            throw DataError("image " + id + " has shape " + s.image.shape().str());
        }
        (key == "train" ? ds.train : ds.test).push_back(std::move(s));
    }
    if (ds.height <= 0 || ds.width <= 0) throw DataError("manifest: missing size line");
    return ds;
}

} // namespace ggnet
