#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cvae/gaussian.hpp"
#include "cvae/model.hpp"
#include "cvae/sprites.hpp"

namespace cvae {

struct ClassificationResult {
    ConceptLabel chosen;                                // per-domain argmin
    std::array<std::vector<double>, kNumDomains> kl;    // full score tables
};

// KL-based concept classifier: per domain, the atomic label whose learned
// Gaussian has the smallest KL relative to the encoder's marginal for that
// dimension. Uses the encoder only. Ties break towards the earlier
// vocabulary entry.
inline ClassificationResult classify(const Model& model,
                                     const std::vector<std::uint8_t>& image) {
    const auto& cfg = model.config();
    if (cfg.variant == Variant::Vanilla)
        throw ContractError("classify: needs a conceptual model");
    for (int d = 0; d < kNumDomains; ++d)
        if (cfg.vocab[d].empty())
            throw ContractError("classify: model has no vocabulary");
    DiagGaussian q = model.encode(image);
    concepts::PriorTable priors = model.priors();
    ClassificationResult res;
    for (int d = 0; d < kNumDomains; ++d) {
        Gauss1D qd = q.component(d);
        res.kl[d].resize(priors[d].size());
        int best = 0;
        for (std::size_t l = 0; l < priors[d].size(); ++l) {
            res.kl[d][l] = kl_gauss1(qd, priors[d][l]);
            if (res.kl[d][l] < res.kl[d][best]) best = (int)l;
        }
        res.chosen[d] = best;
    }
    return res;
}

struct AccuracyTable {
    std::array<double, kNumDomains> accuracy{};
    int count = 0;

    double rounded(int d) const {
        return std::round(accuracy[d] * 100.0) / 100.0;
    }
};

inline AccuracyTable evaluate_accuracy(const Model& model,
                                       const std::vector<SpriteInstance>& split) {
    if (split.empty()) throw ContractError("evaluate_accuracy: empty split");
    AccuracyTable t;
    t.count = (int)split.size();
    std::array<int, kNumDomains> hits{};
    for (const auto& inst : split) {
        ClassificationResult r = classify(model, inst.image);
        for (int d = 0; d < kNumDomains; ++d)
            if (r.chosen[d] == inst.truth[d]) ++hits[d];
    }
    for (int d = 0; d < kNumDomains; ++d)
        t.accuracy[d] = (double)hits[d] / t.count;
    return t;
}

// Per-epoch accuracy series over a list of model snapshots.
inline std::vector<AccuracyTable> learning_curve(
    const std::vector<const Model*>& snapshots,
    const std::vector<SpriteInstance>& dev) {
    if (snapshots.empty())
        throw ContractError("learning_curve: need at least one snapshot");
    std::vector<AccuracyTable> out;
    out.reserve(snapshots.size());
    for (const Model* m : snapshots) out.push_back(evaluate_accuracy(*m, dev));
    return out;
}

}  // namespace cvae
