#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "cvae/image_io.hpp"
#include "cvae/model.hpp"
#include "cvae/sprites.hpp"
#include "cvae/train.hpp"

namespace cvae {

// One row per (instance, dim): enough to reproduce every cluster-plot panel.
inline void write_clusters_csv(std::ostream& os, const Model& model,
                               const std::vector<SpriteInstance>& split,
                               const DatasetConfig& dcfg) {
    os << "instance,dim,mean,logvar,colour,size,shape,position\n";
    os.precision(10);
    auto qs = encode_batch(model, split);
    int L = model.config().latent_dims();
    for (std::size_t i = 0; i < split.size(); ++i) {
        for (int d = 0; d < L; ++d) {
            os << i << "," << d << "," << qs[i].mean[d] << "," << qs[i].logvar[d];
            for (int dom = 0; dom < kNumDomains; ++dom)
                os << "," << label_name(dcfg, dom, split[i].truth[dom]);
            os << "\n";
        }
    }
}

// Mean silhouette coefficient of 1-D values under a grouping.
inline double silhouette_1d(const std::vector<double>& values,
                            const std::vector<int>& groups) {
    if (values.size() != groups.size() || values.empty())
        throw std::invalid_argument("silhouette: bad inputs");
    std::set<int> gset(groups.begin(), groups.end());
    if (gset.size() < 2) throw std::invalid_argument("silhouette: need >= 2 groups");
    std::size_t n = values.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::map<int, std::pair<double, int>> per_group;  // sum dist, count
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            auto& e = per_group[groups[j]];
            e.first += std::abs(values[i] - values[j]);
            e.second += 1;
        }
        auto own = per_group.find(groups[i]);
        double a = (own == per_group.end() || own->second.second == 0)
                       ? 0.0
                       : own->second.first / own->second.second;
        double b = 1e300;
        for (auto& [g, e] : per_group) {
            if (g == groups[i]) continue;
            b = std::min(b, e.first / e.second);
        }
        double denom = std::max(a, b);
        acc += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return acc / n;
}

// Decode a sweep along one latent dimension, all others held at the
// input's encoding; returns the horizontally concatenated strip.
inline std::vector<std::uint8_t> traverse_strip(const Model& model,
                                                const std::vector<std::uint8_t>& image,
                                                int dim, int steps, double range) {
    const auto& cfg = model.config();
    if (dim < 0 || dim >= cfg.latent_dims())
        throw DimensionError("traverse: dim out of range");
    if (steps < 1) throw DimensionError("traverse: steps must be >= 1");
    DiagGaussian q = model.encode(image);
    int s = cfg.image_size;
    std::vector<std::uint8_t> strip((std::size_t)s * s * steps * 3);
    for (int i = 0; i < steps; ++i) {
        std::vector<double> z = q.mean;
        if (steps > 1)
            z[dim] = q.mean[dim] - range + 2.0 * range * i / (steps - 1);
        auto img = float_to_rgb8(model.decode(z));
        // place column block i
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                for (int c = 0; c < 3; ++c)
                    strip[(((std::size_t)y * steps + i) * s + x) * 3 + c] =
                        img[((std::size_t)y * s + x) * 3 + c];
    }
    return strip;
}

// Circular-mean hue of the foreground (pixels far from the grey background).
inline double dominant_hue(const std::vector<std::uint8_t>& rgb, int width,
                           int height, double fg_threshold = 0.15) {
    double sx = 0.0, sy = 0.0;
    int count = 0;
    for (int i = 0; i < width * height; ++i) {
        double r = rgb[(std::size_t)i * 3] / 255.0;
        double g = rgb[(std::size_t)i * 3 + 1] / 255.0;
        double b = rgb[(std::size_t)i * 3 + 2] / 255.0;
        double mx = std::max({r, g, b}), mn = std::min({r, g, b});
        double dist = std::abs(r - kBackgroundGrey) + std::abs(g - kBackgroundGrey) +
                      std::abs(b - kBackgroundGrey);
        if (dist < fg_threshold || mx - mn < 1e-6) continue;
        double h;
        if (mx == r) h = std::fmod((g - b) / (mx - mn) / 6.0 + 1.0, 1.0);
        else if (mx == g) h = ((b - r) / (mx - mn) + 2.0) / 6.0;
        else h = ((r - g) / (mx - mn) + 4.0) / 6.0;
        sx += std::cos(2.0 * M_PI * h);
        sy += std::sin(2.0 * M_PI * h);
        ++count;
    }
    if (count == 0) return -1.0;  // no foreground
    double a = std::atan2(sy, sx) / (2.0 * M_PI);
    return a < 0.0 ? a + 1.0 : a;
}

// Distinct hue-bin count across the frames of a traversal strip.
inline int distinct_hue_bins(const std::vector<std::uint8_t>& strip, int frame_size,
                             int steps, int bins = 12) {
    std::set<int> seen;
    for (int i = 0; i < steps; ++i) {
        std::vector<std::uint8_t> frame((std::size_t)frame_size * frame_size * 3);
        for (int y = 0; y < frame_size; ++y)
            for (int x = 0; x < frame_size; ++x)
                for (int c = 0; c < 3; ++c)
                    frame[((std::size_t)y * frame_size + x) * 3 + c] =
                        strip[(((std::size_t)y * steps + i) * frame_size + x) * 3 + c];
        double h = dominant_hue(frame, frame_size, frame_size);
        if (h >= 0.0) seen.insert((int)(h * bins) % bins);
    }
    return (int)seen.size();
}

}  // namespace cvae
