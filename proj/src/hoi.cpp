#include "ggnet/hoi.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "ggnet/errors.hpp"

namespace ggnet {

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

Box union_box(const Box& a, const Box& b) {
    return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

void HoiCategoryTable::add_meaningful(int verb, int object_class, bool rare) {
    if (verb < 0 || verb >= verbs_ || object_class < 0 || object_class >= objects_) {
        throw DataError("category (" + std::to_string(verb) + ", " + std::to_string(object_class) +
                        ") outside table of " + std::to_string(verbs_) + " verbs x " + std::to_string(objects_) +
                        " objects");
    }
    meaningful_.insert({verb, object_class});
    if (rare) rare_.insert({verb, object_class});
}

void HoiCategoryTable::set_rare(int verb, int object_class, bool rare) {
    if (!is_meaningful(verb, object_class)) {
        throw DataError("cannot flag non-meaningful pair (" + std::to_string(verb) + ", " +
                        std::to_string(object_class) + ") as rare");
    }
    if (rare) {
        rare_.insert({verb, object_class});
    } else {
        rare_.erase({verb, object_class});
    }
}

std::vector<int> HoiCategoryTable::verbs_for_object(int object_class) const {
    std::vector<int> out;
    for (const auto& [v, o] : meaningful_) {
        if (o == object_class) out.push_back(v);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void HoiCategoryTable::validate(const HoiAnnotation& a) const {
    if (!is_meaningful(a.verb, a.object_class)) {
        throw DataError("annotation pair (verb " + std::to_string(a.verb) + ", object " +
                        std::to_string(a.object_class) + ") is not meaningful");
    }
    if (!a.human.valid() || !a.object.valid()) throw DataError("annotation box with nonpositive extent");
}

namespace {

std::istringstream data_line(const std::string& line) { return std::istringstream(line); }

bool skip_line(const std::string& line) {
    const auto p = line.find_first_not_of(" \t\r");
    return p == std::string::npos || line[p] == '#';
}

void put_box(std::ostream& os, const Box& b) { os << ' ' << b.x1 << ' ' << b.y1 << ' ' << b.x2 << ' ' << b.y2; }

bool get_box(std::istream& is, Box& b) { return static_cast<bool>(is >> b.x1 >> b.y1 >> b.x2 >> b.y2); }

} // namespace

void write_annotations(std::ostream& os, const std::string& image_id, const std::vector<HoiAnnotation>& annos) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& a : annos) {
        os << image_id << ' ' << a.verb << ' ' << a.object_class;
        put_box(os, a.human);
        put_box(os, a.object);
        os << '\n';
    }
}

void read_annotations(std::istream& is, AnnotationMap& out) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (skip_line(line)) continue;
        auto ls = data_line(line);
        std::string id;
        HoiAnnotation a;
        if (!(ls >> id >> a.verb >> a.object_class) || !get_box(ls, a.human) || !get_box(ls, a.object)) {
            throw DataError("annotation line " + std::to_string(lineno) + " malformed: " + line);
        }
        out[id].push_back(a);
    }
}

AnnotationMap load_annotations(const std::filesystem::path& file_or_dir) {
    AnnotationMap out;
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(file_or_dir)) {
        for (const auto& e : std::filesystem::directory_iterator(file_or_dir)) {
            if (e.path().extension() == ".txt") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(file_or_dir);
    }
    for (const auto& f : files) {
        std::ifstream is(f);
        if (!is) throw DataError("cannot open " + f.string());
        read_annotations(is, out);
    }
    return out;
}

void write_triplets(std::ostream& os, const std::string& image_id, const std::vector<HoiTriplet>& triplets) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& t : triplets) {
        os << image_id << ' ' << t.verb << ' ' << t.object_class << ' ' << t.score;
        put_box(os, t.human);
        put_box(os, t.object);
        os << '\n';
    }
}

void read_triplets(std::istream& is, TripletMap& out) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (skip_line(line)) continue;
        auto ls = data_line(line);
        std::string id;
        HoiTriplet t;
        if (!(ls >> id >> t.verb >> t.object_class >> t.score) || !get_box(ls, t.human) || !get_box(ls, t.object)) {
            throw DataError("triplet line " + std::to_string(lineno) + " malformed: " + line);
        }
        out[id].push_back(t);
    }
}

TripletMap load_triplets(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw DataError("cannot open " + file.string());
    TripletMap out;
    read_triplets(is, out);
    return out;
}

void write_table(std::ostream& os, const HoiCategoryTable& table) {
    os << "# verb object rare\n";
    os << "verbs " << table.verbs() << '\n';
    os << "objects " << table.objects() << '\n';
    for (const auto& [v, o] : table.meaningful()) {
        os << "pair " << v << ' ' << o << ' ' << (table.is_rare(v, o) ? 1 : 0) << '\n';
    }
}

HoiCategoryTable read_table(std::istream& is) {
    std::string line;
    int verbs = -1, objects = -1;
    std::vector<std::tuple<int, int, int>> pairs;
    while (std::getline(is, line)) {
        if (skip_line(line)) continue;
        auto ls = data_line(line);
        std::string key;
        ls >> key;
        if (key == "verbs") {
            ls >> verbs;
        } else if (key == "objects") {
            ls >> objects;
        } else if (key == "pair") {
            int v = 0, o = 0, r = 0;
            if (!(ls >> v >> o >> r)) throw DataError("table: malformed pair line: " + line);
            pairs.emplace_back(v, o, r);
        } else {
            throw DataError("table: unknown key '" + key + "'");
        }
        if (!ls && !ls.eof()) throw DataError("table: malformed line: " + line);
    }
    if (verbs <= 0 || objects <= 0) throw DataError("table: missing verbs/objects header");
    HoiCategoryTable t(verbs, objects);
    for (auto [v, o, r] : pairs) t.add_meaningful(v, o, r != 0);
    return t;
}

HoiCategoryTable load_table(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path.string());
    return read_table(is);
}

} // namespace ggnet
