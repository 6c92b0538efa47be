#pragma once

// Deterministic synthetic HOI scenes. Humans are flat rectangles; each verb
// places its object at a characteristic displacement and paints it with a
// characteristic texture; object classes differ by colour.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ggnet/hoi.hpp"
#include "ggnet/tensor.hpp"

namespace ggnet {

enum class Texture { solid, h_stripes, v_stripes, checker };

struct VerbSignature {
    double angle_deg = 0;  // direction from human centre to object centre
    double distance = 28;  // mean centre distance in pixels
    Texture texture = Texture::solid;
};

struct SceneSpec {
    std::uint64_t seed = 1;
    int height = 64;
    int width = 64;
    int verbs = 4;
    int objects = 3;
    int instances_min = 1;
    int instances_max = 3;
    double distance = 28;    // centre distance for every verb
    double jitter = 1.5;     // per-axis displacement noise, pixels
    double angle_step = 0;   // degrees between verb directions; 0 = 360 / verbs
    double noise = 0.05;     // background noise amplitude
    double rare_fraction = 0.2;
    int rare_cap = 8;        // training instances allowed per rare category
    int n_train = 200;
    int n_test = 100;

    /// Per-verb signatures derived from the fields above.
    [[nodiscard]] std::vector<VerbSignature> signatures() const;
    /// Verb v pairs with objects v % O and (v + 1) % O.
    [[nodiscard]] HoiCategoryTable category_table() const;
    void validate() const;
};

/// Parses `key = value` lines; unknown keys are ConfigError.
SceneSpec parse_scene_spec(std::istream& is);
SceneSpec load_scene_spec(const std::filesystem::path& path);
void write_scene_spec(std::ostream& os, const SceneSpec& spec);

struct Scene {
    Tensor<float> image;  // (1, 3, H, W) in [0, 1]
    std::vector<HoiAnnotation> annotations;
};

/// Human-to-object centre displacement for one instance of `verb`.
std::pair<double, double> sample_displacement(const SceneSpec& spec, int verb, std::mt19937_64& rng);

/// One scene. `allowed` lists the categories that may be drawn.
Scene generate_scene(const SceneSpec& spec, std::mt19937_64& rng,
                     const std::vector<HoiCategoryTable::Pair>& allowed);
Scene generate_scene(const SceneSpec& spec, std::mt19937_64& rng);

/// Independent stream for image `index` of a split (0 = train, 1 = test).
std::mt19937_64 scene_rng(std::uint64_t seed, int split, int index);

struct Sample {
    std::string id;
    Tensor<float> image;
    std::vector<HoiAnnotation> annotations;
};

struct Dataset {
    HoiCategoryTable table;
    int height = 0, width = 0;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

/// Builds the dataset in memory. Rare categories (chosen from the seed) stop
/// being drawn for training once `rare_cap` instances exist.
Dataset make_dataset(const SceneSpec& spec);

/// Directory layout: images/<id>.ggt, annos/<id>.txt, table.txt, manifest.txt.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace ggnet
