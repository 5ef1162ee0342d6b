#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cvae/checkpoint.hpp"
#include "cvae/rng.hpp"
#include "cvae/tensor.hpp"

namespace cvae {

struct VocabularyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kNumDomains = 4;
constexpr int kAnyLabel = -1;
inline const std::array<std::string, 4> kDomainNames = {"colour", "size", "shape",
                                                        "position"};

// Per-domain atomic label index, or kAnyLabel.
using ConceptLabel = std::array<int, kNumDomains>;

// Half-open interval; hi may exceed 1 for hue wraparound (value taken mod 1).
struct Range {
    double lo = 0.0, hi = 1.0;

    double sample(Rng& rng) const {
        double v = rng.uniform(lo, hi);
        return v >= 1.0 ? v - 1.0 : v;
    }
    bool contains(double v) const {
        if (v >= lo && v < hi) return true;
        return hi > 1.0 && v + 1.0 >= lo && v + 1.0 < hi;
    }
};

enum class ShapeKind { Square = 0, Triangle = 1, Circle = 2 };

struct SpriteSpec {
    double hue = 0.0;        // [0,1)
    double saturation = 1.0; // [0,1]
    double brightness = 1.0; // [0,1]
    double scale = 0.2;      // fraction of image height, (0,1]
    ShapeKind shape = ShapeKind::Square;
    double vpos = 0.5;       // 0 = bottom, 1 = top; horizontal always centred
};

struct DomainSpec {
    std::vector<std::string> labels;
    std::vector<Range> ranges;  // empty for the discrete shape domain

    int index_of(const std::string& l) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == l) return (int)i;
        throw VocabularyError("unknown label: " + l);
    }
};

struct DatasetConfig {
    int image_size = 64;
    int n_train = 3000, n_dev = 300, n_test = 300;
    std::uint64_t seed = 0;
    int any_count = 0;  // ANY slots per training instance
    std::array<DomainSpec, kNumDomains> domains;
    Range saturation{0.5, 1.0};
    Range brightness{0.7, 1.0};

    static DatasetConfig main_config();
    static DatasetConfig rainbow_config();
};

inline DatasetConfig DatasetConfig::main_config() {
    DatasetConfig c;
    c.domains[0] = {{"red", "green", "blue"},
                    {{0.95, 1.05}, {0.27, 0.40}, {0.55, 0.70}}};
    c.domains[1] = {{"small", "medium", "large"},
                    {{0.10, 0.17}, {0.22, 0.30}, {0.35, 0.48}}};
    c.domains[2] = {{"square", "triangle", "circle"}, {}};
    c.domains[3] = {{"bottom", "centre", "top"},
                    {{0.05, 0.25}, {0.40, 0.60}, {0.75, 0.95}}};
    return c;
}

// Seven hue arcs spanning most of [0,1) with occasional gaps.
inline DatasetConfig DatasetConfig::rainbow_config() {
    DatasetConfig c = main_config();
    c.domains[0] = {{"red", "orange", "yellow", "green", "blue", "indigo", "violet"},
                    {{0.95, 1.04},
                     {0.05, 0.11},
                     {0.13, 0.19},
                     {0.27, 0.40},
                     {0.55, 0.67},
                     {0.69, 0.76},
                     {0.78, 0.87}}};
    return c;
}

struct SpriteInstance {
    std::vector<std::uint8_t> image;  // H*W*3, row-major RGB
    ConceptLabel label;               // as given (may contain ANY)
    ConceptLabel truth;               // fully atomic ground truth
    std::optional<SpriteSpec> spec;   // present only for in-memory generation
};

struct Dataset {
    DatasetConfig config;
    std::vector<SpriteInstance> train, dev, test;
};

// ---- rendering ---------------------------------------------------------

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    double i = std::floor(h * 6.0);
    double f = h * 6.0 - i;
    double p = v * (1.0 - s);
    double q = v * (1.0 - f * s);
    double t = v * (1.0 - (1.0 - f) * s);
    switch ((int)i % 6) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

constexpr double kBackgroundGrey = 0.5;
constexpr double kBandLo = 0.12, kBandHi = 0.88;  // vertical placement band

struct RenderWarning {
    std::string message;
};

// Filled anti-aliased shape on a mid-grey background; deterministic.
inline std::vector<double> render_sprite(const SpriteSpec& spec, int size,
                                         std::vector<RenderWarning>* warnings = nullptr) {
    std::vector<double> img((std::size_t)size * size * 3, kBackgroundGrey);
    double h = 0.5 * spec.scale * size;  // half extent in pixels
    if (h <= 0.0) return img;
    double cx = 0.5 * size;
    double cy = size * (kBandHi - spec.vpos * (kBandHi - kBandLo));
    double cy_clamped = std::min(std::max(cy, h), size - h);
    if (cy_clamped != cy && warnings)
        warnings->push_back({"sprite clamped vertically from " + std::to_string(cy) +
                             " to " + std::to_string(cy_clamped)});
    cy = cy_clamped;

    auto inside = [&](double x, double y) -> bool {
        double dx = x - cx, dy = y - cy;
        switch (spec.shape) {
            case ShapeKind::Square:
                return std::abs(dx) <= h && std::abs(dy) <= h;
            case ShapeKind::Circle:
                return dx * dx + dy * dy <= h * h;
            case ShapeKind::Triangle: {
                // apex up: vertices (cx, cy-h), (cx-h, cy+h), (cx+h, cy+h)
                if (dy < -h || dy > h) return false;
                double halfwidth = (dy + h) / 2.0;
                return std::abs(dx) <= halfwidth;
            }
        }
        return false;
    };

    auto rgb = hsv_to_rgb(spec.hue, spec.saturation, spec.brightness);
    int lo_y = std::max(0, (int)std::floor(cy - h - 1));
    int hi_y = std::min(size - 1, (int)std::ceil(cy + h + 1));
    int lo_x = std::max(0, (int)std::floor(cx - h - 1));
    int hi_x = std::min(size - 1, (int)std::ceil(cx + h + 1));
    const int ss = 3;  // 3x3 supersampling
    for (int y = lo_y; y <= hi_y; ++y) {
        for (int x = lo_x; x <= hi_x; ++x) {
            int hit = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx)
                    if (inside(x + (sx + 0.5) / ss, y + (sy + 0.5) / ss)) ++hit;
            if (!hit) continue;
            double cov = (double)hit / (ss * ss);
            double* px = &img[((std::size_t)y * size + x) * 3];
            for (int c = 0; c < 3; ++c)
                px[c] = kBackgroundGrey + cov * (rgb[c] - kBackgroundGrey);
        }
    }
    return img;
}

inline std::vector<std::uint8_t> quantize_image(const std::vector<double>& img) {
    std::vector<std::uint8_t> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = std::min(1.0, std::max(0.0, img[i]));
        out[i] = (std::uint8_t)std::lround(v * 255.0);
    }
    return out;
}

// ---- sampling ----------------------------------------------------------

inline SpriteSpec sample_spec(const ConceptLabel& label, const DatasetConfig& cfg,
                              Rng& rng) {
    SpriteSpec s;
    for (int d = 0; d < kNumDomains; ++d) {
        if (label[d] == kAnyLabel)
            throw VocabularyError("sample_spec: ANY slot not allowed here");
        if (label[d] < 0 || label[d] >= (int)cfg.domains[d].labels.size())
            throw VocabularyError("sample_spec: label out of vocabulary");
    }
    s.hue = cfg.domains[0].ranges[label[0]].sample(rng);
    s.scale = cfg.domains[1].ranges[label[1]].sample(rng);
    s.shape = (ShapeKind)label[2];
    s.vpos = cfg.domains[3].ranges[label[3]].sample(rng);
    s.saturation = cfg.saturation.sample(rng);
    s.brightness = cfg.brightness.sample(rng);
    return s;
}

inline SpriteInstance sample_instance(const ConceptLabel& label,
                                      const DatasetConfig& cfg, Rng& rng) {
    SpriteInstance inst;
    inst.truth = label;
    inst.label = label;
    SpriteSpec spec = sample_spec(label, cfg, rng);
    inst.image = quantize_image(render_sprite(spec, cfg.image_size));
    inst.spec = spec;
    return inst;
}

// Ground-truth labelling of a spec from the configured ranges; returns
// kAnyLabel in a slot when no range matches (should not happen for generated
// data).
inline ConceptLabel label_from_spec(const SpriteSpec& spec,
                                    const DatasetConfig& cfg) {
    ConceptLabel l{kAnyLabel, kAnyLabel, (int)spec.shape, kAnyLabel};
    auto match = [](const DomainSpec& d, double v) {
        for (std::size_t i = 0; i < d.ranges.size(); ++i)
            if (d.ranges[i].contains(v)) return (int)i;
        return kAnyLabel;
    };
    l[0] = match(cfg.domains[0], spec.hue);
    l[1] = match(cfg.domains[1], spec.scale);
    l[3] = match(cfg.domains[3], spec.vpos);
    return l;
}

inline Dataset generate_dataset(const DatasetConfig& cfg) {
    Dataset ds;
    ds.config = cfg;
    Rng root(cfg.seed);
    auto gen_split = [&](int split_id, int count, bool mask_any) {
        std::vector<SpriteInstance> out;
        out.reserve(count);
        for (int i = 0; i < count; ++i) {
            Rng rng = root.derive((std::uint64_t)split_id, (std::uint64_t)i);
            ConceptLabel label;
            for (int d = 0; d < kNumDomains; ++d)
                label[d] = rng.uniform_int(0, (int)cfg.domains[d].labels.size() - 1);
            SpriteInstance inst = sample_instance(label, cfg, rng);
            if (mask_any && cfg.any_count > 0) {
                // choose any_count distinct slots at random
                std::array<int, kNumDomains> slots = {0, 1, 2, 3};
                for (int j = kNumDomains - 1; j > 0; --j)
                    std::swap(slots[j], slots[rng.uniform_int(0, j)]);
                for (int j = 0; j < cfg.any_count && j < kNumDomains; ++j)
                    inst.label[slots[j]] = kAnyLabel;
            }
            out.push_back(std::move(inst));
        }
        return out;
    };
    ds.train = gen_split(0, cfg.n_train, true);
    ds.dev = gen_split(1, cfg.n_dev, false);
    ds.test = gen_split(2, cfg.n_test, false);
    return ds;
}

// ---- serialization -----------------------------------------------------

inline std::string label_name(const DatasetConfig& cfg, int domain, int idx) {
    return idx == kAnyLabel ? "any" : cfg.domains[domain].labels[idx];
}

inline std::string range_str(const Range& r) {
    std::ostringstream os;
    os.precision(17);
    os << r.lo << ":" << r.hi;
    return os.str();
}

inline Range parse_range(const std::string& s) {
    auto pos = s.find(':');
    if (pos == std::string::npos)
        throw FormatError("dataset meta: bad range '" + s + "'");
    return {std::stod(s.substr(0, pos)), std::stod(s.substr(pos + 1))};
}

inline std::string dataset_meta_text(const DatasetConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "image_size=" << cfg.image_size << "\n";
    os << "n_train=" << cfg.n_train << "\n";
    os << "n_dev=" << cfg.n_dev << "\n";
    os << "n_test=" << cfg.n_test << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "any_count=" << cfg.any_count << "\n";
    os << "saturation=" << range_str(cfg.saturation) << "\n";
    os << "brightness=" << range_str(cfg.brightness) << "\n";
    for (int d = 0; d < kNumDomains; ++d) {
        os << "[domain " << kDomainNames[d] << "]\n";
        os << "labels=";
        for (std::size_t i = 0; i < cfg.domains[d].labels.size(); ++i)
            os << (i ? "," : "") << cfg.domains[d].labels[i];
        os << "\n";
        for (std::size_t i = 0; i < cfg.domains[d].ranges.size(); ++i)
            os << "range." << cfg.domains[d].labels[i] << "="
               << range_str(cfg.domains[d].ranges[i]) << "\n";
    }
    return os.str();
}

inline std::vector<std::string> split_str(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline DatasetConfig parse_dataset_meta(const std::string& text) {
    DatasetConfig cfg;
    for (auto& d : cfg.domains) d = DomainSpec{};
    int domain = -1;
    std::istringstream is(text);
    std::string line;
    std::array<std::map<std::string, Range>, kNumDomains> pending_ranges;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            domain = -1;
            for (int d = 0; d < kNumDomains; ++d)
                if (line == "[domain " + kDomainNames[d] + "]") domain = d;
            if (domain < 0) throw FormatError("dataset meta: unknown section " + line);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("dataset meta: bad line '" + line + "'");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (domain < 0) {
            if (key == "image_size") cfg.image_size = std::stoi(val);
            else if (key == "n_train") cfg.n_train = std::stoi(val);
            else if (key == "n_dev") cfg.n_dev = std::stoi(val);
            else if (key == "n_test") cfg.n_test = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "any_count") cfg.any_count = std::stoi(val);
            else if (key == "saturation") cfg.saturation = parse_range(val);
            else if (key == "brightness") cfg.brightness = parse_range(val);
            else throw FormatError("dataset meta: unknown key " + key);
        } else {
            if (key == "labels") {
                cfg.domains[domain].labels = split_str(val, ',');
            } else if (key.rfind("range.", 0) == 0) {
                pending_ranges[domain][key.substr(6)] = parse_range(val);
            } else {
                throw FormatError("dataset meta: unknown key " + key);
            }
        }
    }
    for (int d = 0; d < kNumDomains; ++d) {
        auto& ds = cfg.domains[d];
        if (!pending_ranges[d].empty()) {
            ds.ranges.resize(ds.labels.size());
            for (std::size_t i = 0; i < ds.labels.size(); ++i) {
                auto it = pending_ranges[d].find(ds.labels[i]);
                if (it == pending_ranges[d].end())
                    throw FormatError("dataset meta: missing range for " + ds.labels[i]);
                ds.ranges[i] = it->second;
            }
        }
    }
    return cfg;
}

inline void write_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream meta(dir + "/meta");
        meta << dataset_meta_text(ds.config);
        if (!meta) throw FormatError("dataset: cannot write meta");
    }
    std::ofstream img(dir + "/images.bin", std::ios::binary);
    std::ofstream csv(dir + "/labels.csv");
    csv << "index,colour,size,shape,position\n";
    long idx = 0;
    for (const auto* split : {&ds.train, &ds.dev, &ds.test}) {
        for (const auto& inst : *split) {
            img.write((const char*)inst.image.data(),
                      (std::streamsize)inst.image.size());
            csv << idx;
            for (int d = 0; d < kNumDomains; ++d)
                csv << "," << label_name(ds.config, d, inst.label[d]);
            csv << "\n";
            ++idx;
        }
    }
    if (!img || !csv) throw FormatError("dataset: write failed");
}

inline Dataset read_dataset(const std::string& dir) {
    std::ifstream metaf(dir + "/meta");
    if (!metaf) throw FormatError("dataset: missing meta in " + dir);
    std::stringstream metass;
    metass << metaf.rdbuf();
    Dataset ds;
    ds.config = parse_dataset_meta(metass.str());
    const DatasetConfig& cfg = ds.config;

    std::size_t per = (std::size_t)cfg.image_size * cfg.image_size * 3;
    long total = cfg.n_train + cfg.n_dev + cfg.n_test;
    std::ifstream img(dir + "/images.bin", std::ios::binary);
    if (!img) throw FormatError("dataset: missing images.bin in " + dir);
    std::ifstream csv(dir + "/labels.csv");
    if (!csv) throw FormatError("dataset: missing labels.csv in " + dir);
    std::string header;
    std::getline(csv, header);
    if (header != "index,colour,size,shape,position")
        throw FormatError("dataset: bad labels.csv header");

    auto read_split = [&](std::vector<SpriteInstance>& out, int count, long base) {
        out.resize(count);
        for (int i = 0; i < count; ++i) {
            SpriteInstance& inst = out[i];
            inst.image.resize(per);
            if (!img.read((char*)inst.image.data(), (std::streamsize)per))
                throw FormatError("dataset: images.bin truncated at byte " +
                                  std::to_string((base + i) * (long)per));
            std::string line;
            if (!std::getline(csv, line))
                throw FormatError("dataset: labels.csv truncated at row " +
                                  std::to_string(base + i));
            auto cells = split_str(line, ',');
            if (cells.size() != 5)
                throw FormatError("dataset: bad labels.csv row " + line);
            for (int d = 0; d < kNumDomains; ++d) {
                const std::string& name = cells[d + 1];
                inst.label[d] = name == "any" ? kAnyLabel
                                              : cfg.domains[d].index_of(name);
                inst.truth[d] = inst.label[d];
            }
        }
    };
    read_split(ds.train, cfg.n_train, 0);
    read_split(ds.dev, cfg.n_dev, cfg.n_train);
    read_split(ds.test, cfg.n_test, (long)cfg.n_train + cfg.n_dev);
    (void)total;
    return ds;
}

}  // namespace cvae
