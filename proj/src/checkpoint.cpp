#include "ggnet/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "ggnet/config.hpp"
#include "ggnet/tensor_io.hpp"

namespace ggnet {

namespace {

const char* activation_name(WeightActivation a) { return a == WeightActivation::raw ? "raw" : "sigmoid"; }

WeightActivation parse_activation(const std::string& s) {
    if (s == "raw") return WeightActivation::raw;
    if (s == "sigmoid") return WeightActivation::sigmoid;
    throw ConfigError("weight_activation must be raw or sigmoid, got '" + s + "'");
}

Tensor<float> bias_tensor(const VectorX<float>& b) {
    return Tensor<float>::from_data(Shape{1, static_cast<int>(b.size()), 1, 1}, b);
}

} // namespace

void write_model_config(std::ostream& os, const ModelConfig& cfg, const std::string& prefix) {
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << prefix << "verbs = " << cfg.verbs << '\n'
       << prefix << "objects = " << cfg.objects << '\n'
       << prefix << "channels = " << cfg.channels << '\n'
       << prefix << "stride = " << cfg.stride << '\n'
       << prefix << "actpoints = " << cfg.actpoints << '\n'
       << prefix << "height = " << cfg.height << '\n'
       << prefix << "width = " << cfg.width << '\n'
       << prefix << "gaze1 = " << b(cfg.gaze1) << '\n'
       << prefix << "gaze2 = " << b(cfg.gaze2) << '\n'
       << prefix << "apm_per_verb = " << b(cfg.apm_per_verb) << '\n'
       << prefix << "weight_activation = " << activation_name(cfg.weight_activation) << '\n';
}

ModelConfig parse_model_config(const KeyValues& kv) {
    ModelConfig cfg;
    std::string act = activation_name(cfg.weight_activation);
    ConfigBinder binder;
    binder.bind("verbs", cfg.verbs);
    binder.bind("objects", cfg.objects);
    binder.bind("channels", cfg.channels);
    binder.bind("stride", cfg.stride);
    binder.bind("actpoints", cfg.actpoints);
    binder.bind("height", cfg.height);
    binder.bind("width", cfg.width);
    binder.bind("gaze1", cfg.gaze1);
    binder.bind("gaze2", cfg.gaze2);
    binder.bind("apm_per_verb", cfg.apm_per_verb);
    binder.bind("weight_activation", act);
    binder.apply(kv);
    cfg.weight_activation = parse_activation(act);
    cfg.validate();
    return cfg;
}

std::vector<ManifestEntry> checkpoint_layout(const ModelParams<float>& params) {
    std::vector<ManifestEntry> out;
    std::size_t offset = 0;
    params.visit([&](const std::string& name, const ConvParams<float>& p) {
        const Shape ws = p.weight.shape();
        const Shape bs{1, p.out_channels(), 1, 1};
        out.push_back({name + ".weight", ws, offset});
        offset += serialized_size(ws);
        out.push_back({name + ".bias", bs, offset});
        offset += serialized_size(bs);
    });
    return out;
}

std::filesystem::path manifest_path(const std::filesystem::path& ggt_path) {
    auto p = ggt_path;
    p.replace_extension(".manifest");
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ofstream data(path, std::ios::binary);
    std::ofstream man(manifest_path(path));
    if (!data || !man) throw DataError("cannot write checkpoint " + path.string());
    ck.params.visit([&](const std::string&, const ConvParams<float>& p) {
        write_tensor(data, p.weight);
        write_tensor(data, bias_tensor(p.bias));
    });
    man << "# ggnet checkpoint\n";
    write_model_config(man, ck.model, "model ");
    for (const auto& e : checkpoint_layout(ck.params)) {
        man << "tensor " << e.name << ' ' << e.shape.n << ' ' << e.shape.c << ' ' << e.shape.h << ' ' << e.shape.w
            << ' ' << e.offset << '\n';
    }
    if (!data || !man) throw DataError("checkpoint write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto file = std::filesystem::is_directory(path) ? path / "checkpoint.ggt" : path;
    std::ifstream man(manifest_path(file));
    if (!man) throw DataError("cannot open checkpoint manifest " + manifest_path(file).string());

    KeyValues model_kv;
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(man, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "model") {
            std::string key, eq, value;
            if (!(ls >> key >> eq >> value) || eq != "=") throw DataError("manifest: malformed line: " + line);
            model_kv.emplace_back(key, value);
        } else if (kind == "tensor") {
            ManifestEntry e;
            if (!(ls >> e.name >> e.shape.n >> e.shape.c >> e.shape.h >> e.shape.w >> e.offset)) {
                throw DataError("manifest: malformed line: " + line);
            }
            entries.push_back(e);
        } else {
            throw DataError("manifest: unknown record '" + kind + "'");
        }
    }

    Checkpoint ck;
    ck.model = parse_model_config(model_kv);
    ck.params = ModelParams<float>(ck.model);
    const auto expected = checkpoint_layout(ck.params);
    if (expected.size() != entries.size()) {
        throw DataError("checkpoint has " + std::to_string(entries.size()) + " tensors, model needs " +
                        std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& a = entries[i];
        const auto& b = expected[i];
        if (a.name != b.name || a.shape != b.shape || a.offset != b.offset) {
            throw DataError("checkpoint tensor " + a.name + " " + a.shape.str() + " does not match model tensor " +
                            b.name + " " + b.shape.str());
        }
    }

    std::ifstream data(file, std::ios::binary);
    if (!data) throw DataError("cannot open checkpoint " + file.string());
    std::size_t i = 0;
    ck.params.visit([&](const std::string&, ConvParams<float>& p) {
        auto w = read_tensor(data);
        auto b = read_tensor(data);
        if (w.shape() != entries[i].shape || b.shape() != entries[i + 1].shape) {
            throw DataError("checkpoint payload shape mismatch at " + entries[i].name);
        }
        p.weight = std::move(w);
        p.bias = b.data();
        i += 2;
    });
    if (data.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint has trailing bytes");
    return ck;
}

} // namespace ggnet
