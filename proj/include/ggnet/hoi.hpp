#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ggnet {

/// Axis-aligned box in input-image pixels, (x1, y1) top-left, (x2, y2) bottom-right.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    [[nodiscard]] double width() const { return x2 - x1; }
    [[nodiscard]] double height() const { return y2 - y1; }
    [[nodiscard]] double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
    [[nodiscard]] double cx() const { return 0.5 * (x1 + x2); }
    [[nodiscard]] double cy() const { return 0.5 * (y1 + y2); }
    [[nodiscard]] bool valid() const { return width() > 0 && height() > 0; }

    friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);

/// Smallest box covering both.
Box union_box(const Box& a, const Box& b);

struct HoiAnnotation {
    Box human;
    Box object;
    int verb = 0;
    int object_class = 0;

    /// Midpoint of the two box centres, in feature-map pixels for stride d.
    [[nodiscard]] std::pair<double, double> interaction_point(int stride) const {
        return {0.5 * (human.cx() + object.cx()) / stride, 0.5 * (human.cy() + object.cy()) / stride};
    }

    friend bool operator==(const HoiAnnotation&, const HoiAnnotation&) = default;
};

struct HoiTriplet {
    Box human;
    Box object;
    int verb = 0;
    int object_class = 0;
    double score = 0;
};

/// Verb and object vocabularies plus the meaningful (verb, object) pairs.
class HoiCategoryTable {
public:
    using Pair = std::pair<int, int>;

    HoiCategoryTable() = default;
    HoiCategoryTable(int verbs, int objects) : verbs_(verbs), objects_(objects) {}

    [[nodiscard]] int verbs() const { return verbs_; }
    [[nodiscard]] int objects() const { return objects_; }

    void add_meaningful(int verb, int object_class, bool rare = false);
    void set_rare(int verb, int object_class, bool rare);

    [[nodiscard]] bool is_meaningful(int verb, int object_class) const {
        return meaningful_.count({verb, object_class}) != 0;
    }
    [[nodiscard]] bool is_rare(int verb, int object_class) const { return rare_.count({verb, object_class}) != 0; }

    [[nodiscard]] const std::set<Pair>& meaningful() const { return meaningful_; }
    [[nodiscard]] const std::set<Pair>& rare() const { return rare_; }

    /// Meaningful verbs that take the given object class, ascending.
    [[nodiscard]] std::vector<int> verbs_for_object(int object_class) const;

    /// Throws DataError unless the annotation is a meaningful pair with valid boxes.
    void validate(const HoiAnnotation& a) const;

    friend bool operator==(const HoiCategoryTable&, const HoiCategoryTable&) = default;

private:
    int verbs_ = 0;
    int objects_ = 0;
    std::set<Pair> meaningful_;
    std::set<Pair> rare_;
};

using AnnotationMap = std::map<std::string, std::vector<HoiAnnotation>>;
using TripletMap = std::map<std::string, std::vector<HoiTriplet>>;

// Text formats. Annotation lines:
//   image_id verb_id object_class x1h y1h x2h y2h x1o y1o x2o y2o
// Triplet lines:
//   image_id verb object_class score x1h y1h x2h y2h x1o y1o x2o y2o
// Blank lines and lines starting with '#' are ignored.

void write_annotations(std::ostream& os, const std::string& image_id, const std::vector<HoiAnnotation>& annos);
/// Appends every parsed line to `out`.
void read_annotations(std::istream& is, AnnotationMap& out);
AnnotationMap load_annotations(const std::filesystem::path& file_or_dir);

void write_triplets(std::ostream& os, const std::string& image_id, const std::vector<HoiTriplet>& triplets);
void read_triplets(std::istream& is, TripletMap& out);
TripletMap load_triplets(const std::filesystem::path& file);

void write_table(std::ostream& os, const HoiCategoryTable& table);
HoiCategoryTable read_table(std::istream& is);
HoiCategoryTable load_table(const std::filesystem::path& path);

} // namespace ggnet
