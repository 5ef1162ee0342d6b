#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cvae/adam.hpp"
#include "cvae/classifier.hpp"
#include "cvae/model.hpp"
#include "cvae/sprites.hpp"

namespace cvae {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    AdamConfig adam;
    std::uint64_t seed = 0;
    int eval_every = 1;  // dev-accuracy cadence; 0 disables
    bool cosine_lr = false;  // cosine decay to lr_floor x lr over the run
    double lr_floor = 0.05;
    // Optional two-phase schedule: between ramp_start and ramp_end the
    // reconstruction scale ramps linearly from the model's recon_scale to
    // recon_scale_final, and the prior-table step-size multiplier ramps from
    // the model's psi_lr_scale to 1. Disabled when ramp_start < 0.
    int ramp_start = -1;
    int ramp_end = -1;
    double recon_scale_final = -1.0;
    double psi_lr_final = 1.0;
    double psi_lr_final_logvar = -1.0;  // < 0: follow psi_lr_final
    // Optional batch-size switch at the ramp: epochs >= ramp_start use
    // batch_size2 when it is positive.
    int batch_size2 = 0;
    bool verbose = false;
    std::string diagnostic_path;  // where to dump state on numeric failure
};

struct EpochMetrics {
    int epoch = 0;
    double reconstruction = 0.0;
    std::vector<double> kl_per_dim;
    double total = 0.0;
    std::array<double, kNumDomains> dev_accuracy{-1.0, -1.0, -1.0, -1.0};
};

struct TrainResult {
    std::vector<EpochMetrics> metrics;
    bool ok = true;
    std::string error;
};

inline Tensor batch_to_tensor(const std::vector<SpriteInstance>& split,
                              const std::vector<int>& idx, int image_size,
                              int channels) {
    Tensor x({(int)idx.size(), image_size, image_size, channels});
    std::size_t per = (std::size_t)image_size * image_size * channels;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& img = split[idx[i]].image;
        if (img.size() != per) throw DimensionError("batch: image size mismatch");
        for (std::size_t j = 0; j < per; ++j)
            x.data[i * per + j] = img[j] / 255.0;
    }
    return x;
}

// Batched encoder pass; one DiagGaussian per instance.
inline std::vector<DiagGaussian> encode_batch(
    const Model& model, const std::vector<SpriteInstance>& split) {
    const auto& cfg = model.config();
    int L = cfg.latent_dims();
    std::vector<DiagGaussian> out;
    out.reserve(split.size());
    const int chunk = 64;
    for (std::size_t base = 0; base < split.size(); base += chunk) {
        std::vector<int> idx;
        for (std::size_t i = base; i < std::min(split.size(), base + chunk); ++i)
            idx.push_back((int)i);
        Tape t;
        int x = t.constant(batch_to_tensor(split, idx, cfg.image_size, cfg.channels));
        Model::Encoding e = model.encode_graph(t, x);
        const auto& mu = t.val(e.mu).data;
        const auto& lv = t.val(e.logvar).data;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            DiagGaussian q{std::vector<double>((std::size_t)L),
                           std::vector<double>((std::size_t)L)};
            for (int j = 0; j < L; ++j) {
                q.mean[j] = mu[i * L + j];
                q.logvar[j] = lv[i * L + j];
            }
            out.push_back(std::move(q));
        }
    }
    return out;
}

inline AccuracyTable evaluate_accuracy_batched(
    const Model& model, const std::vector<SpriteInstance>& split) {
    if (split.empty()) throw ContractError("evaluate_accuracy: empty split");
    auto qs = encode_batch(model, split);
    concepts::PriorTable priors = model.priors();
    AccuracyTable t;
    t.count = (int)split.size();
    std::array<int, kNumDomains> hits{};
    for (std::size_t i = 0; i < split.size(); ++i) {
        for (int d = 0; d < kNumDomains; ++d) {
            Gauss1D qd = qs[i].component(d);
            int best = 0;
            for (std::size_t l = 0; l < priors[d].size(); ++l)
                if (kl_gauss1(qd, priors[d][l]) < kl_gauss1(qd, priors[d][best]))
                    best = (int)l;
            if (best == split[i].truth[d]) ++hits[d];
        }
    }
    for (int d = 0; d < kNumDomains; ++d)
        t.accuracy[d] = (double)hits[d] / t.count;
    return t;
}

// Full training state (parameters + optimizer moments + epoch counter) for
// deterministic resume.
inline void save_training_state(const std::string& path, const Model& model,
                                const Adam& opt, int epoch,
                                const std::string& extra_meta = "") {
    std::ostringstream meta;
    meta << "train.epoch=" << epoch << "\n";
    meta << "adam.t=" << opt.step_count() << "\n";
    meta << extra_meta;
    Checkpoint ck = model.to_checkpoint(meta.str());
    auto params = const_cast<Model&>(model).parameters();
    const auto& m = opt.first_moments();
    const auto& v = opt.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
        ck.tensors.emplace_back("adam.m." + params[i]->name,
                                Tensor(params[i]->value.shape, m[i]));
        ck.tensors.emplace_back("adam.v." + params[i]->name,
                                Tensor(params[i]->value.shape, v[i]));
    }
    write_checkpoint(path, ck);
}

inline int load_training_state(const Checkpoint& ck, Model& model, Adam& opt) {
    int epoch = 0;
    std::istringstream is(ck.metadata);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("train.epoch=", 0) == 0) epoch = std::stoi(line.substr(12));
        if (line.rfind("adam.t=", 0) == 0)
            opt.set_step_count(std::stol(line.substr(7)));
    }
    auto params = model.parameters();
    auto& m = opt.first_moments();
    auto& v = opt.second_moments();
    m.clear();
    v.clear();
    for (Param* p : params) {
        const Tensor* tm = ck.find("adam.m." + p->name);
        const Tensor* tv = ck.find("adam.v." + p->name);
        if (!tm || !tv) {
            m.clear();
            v.clear();
            break;
        }
        m.push_back(tm->data);
        v.push_back(tv->data);
    }
    return epoch;
}

// Minibatch Adam over encoder, decoder and conceptual priors. Per-(epoch,
// batch) derived RNG streams keep runs reproducible and resumable.
inline TrainResult train(
    Model& model, const Dataset& ds, const TrainConfig& tc, Adam& opt,
    int start_epoch = 0,
    const std::function<void(const EpochMetrics&, const Model&)>& on_epoch = {}) {
    TrainResult res;
    const auto& mcfg = model.config();
    auto params = model.parameters();
    Rng root(tc.seed);

    int n = (int)ds.train.size();
    if (n == 0) throw ContractError("train: empty training split");
    std::vector<int> order(n);

    double recon0 = mcfg.recon_scale, psi0 = mcfg.psi_lr_scale;
    double recon1 = tc.recon_scale_final >= 0 ? tc.recon_scale_final : recon0;

    for (int epoch = start_epoch; epoch < tc.epochs; ++epoch) {
        if (tc.ramp_start >= 0) {
            double s = tc.ramp_end > tc.ramp_start
                           ? ((double)epoch - tc.ramp_start) /
                                 (tc.ramp_end - tc.ramp_start)
                           : (epoch >= tc.ramp_start ? 1.0 : 0.0);
            s = std::clamp(s, 0.0, 1.0);
            double psi1_lv = tc.psi_lr_final_logvar >= 0 ? tc.psi_lr_final_logvar
                                                         : tc.psi_lr_final;
            model.set_recon_scale(recon0 + (recon1 - recon0) * s);
            model.set_psi_lr_scale(psi0 + (tc.psi_lr_final - psi0) * s,
                                   psi0 + (psi1_lv - psi0) * s);
        }
        if (tc.cosine_lr) {
            double c = 0.5 * (1.0 + std::cos(M_PI * epoch /
                                             std::max(1, tc.epochs - 1)));
            opt.set_lr(tc.adam.lr * (tc.lr_floor + (1.0 - tc.lr_floor) * c));
        }
        Rng shuffle_rng = root.derive(0, (std::uint64_t)epoch);
        std::iota(order.begin(), order.end(), 0);
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

        EpochMetrics em;
        em.epoch = epoch;
        em.kl_per_dim.assign(mcfg.latent_dims(), 0.0);
        int batches = 0;
        int bs = (tc.batch_size2 > 0 && tc.ramp_start >= 0 &&
                  epoch >= tc.ramp_start)
                     ? tc.batch_size2
                     : tc.batch_size;

        for (int base = 0; base < n; base += bs) {
            std::vector<int> idx(order.begin() + base,
                                 order.begin() + std::min(n, base + bs));
            Tape t;
            int x = t.constant(
                batch_to_tensor(ds.train, idx, mcfg.image_size, mcfg.channels));
            std::vector<ConceptLabel> labels;
            for (int i : idx) labels.push_back(ds.train[i].label);
            Rng batch_rng = root.derive(1, (std::uint64_t)epoch,
                                        (std::uint64_t)(base / bs));
            LossBreakdown lb;
            int loss = model.loss_graph(t, x, labels, batch_rng, lb);
            if (!std::isfinite(lb.total)) {
                if (!tc.diagnostic_path.empty())
                    save_training_state(tc.diagnostic_path, model, opt, epoch);
                res.ok = false;
                res.error = "non-finite loss at epoch " + std::to_string(epoch);
                return res;
            }
            model.zero_grads();
            t.backward(loss);
            if (!opt.step(params)) {
                if (!tc.diagnostic_path.empty())
                    save_training_state(tc.diagnostic_path, model, opt, epoch);
                res.ok = false;
                res.error = "non-finite gradient at epoch " + std::to_string(epoch);
                return res;
            }
            em.reconstruction += lb.reconstruction;
            for (std::size_t d = 0; d < lb.kl_per_dim.size(); ++d)
                em.kl_per_dim[d] += lb.kl_per_dim[d];
            em.total += lb.total;
            ++batches;
        }
        em.reconstruction /= batches;
        em.total /= batches;
        for (double& v : em.kl_per_dim) v /= batches;

        if (tc.eval_every > 0 && !ds.dev.empty() &&
            mcfg.variant != Variant::Vanilla &&
            ((epoch + 1) % tc.eval_every == 0 || epoch + 1 == tc.epochs)) {
            em.dev_accuracy = evaluate_accuracy_batched(model, ds.dev).accuracy;
        }
        if (tc.verbose) {
            std::ostringstream os;
            os << "epoch " << epoch << " recon " << em.reconstruction << " total "
               << em.total;
            if (em.dev_accuracy[0] >= 0.0) {
                os << " acc";
                for (double a : em.dev_accuracy) os << " " << a;
            }
            std::fputs((os.str() + "\n").c_str(), stderr);
        }
        if (on_epoch) on_epoch(em, model);
        res.metrics.push_back(std::move(em));
    }
    return res;
}

inline std::string metrics_csv_header(int latent_dims) {
    std::string h = "epoch,recon";
    for (int d = 0; d < latent_dims; ++d) h += ",kl_" + std::to_string(d);
    h += ",total,acc_colour,acc_size,acc_shape,acc_position";
    return h;
}

inline void write_metrics_csv(std::ostream& os,
                              const std::vector<EpochMetrics>& metrics,
                              int latent_dims) {
    os << metrics_csv_header(latent_dims) << "\n";
    os.precision(10);
    for (const auto& em : metrics) {
        os << em.epoch << "," << em.reconstruction;
        for (int d = 0; d < latent_dims; ++d) os << "," << em.kl_per_dim[d];
        os << "," << em.total;
        for (double a : em.dev_accuracy) os << "," << a;
        os << "\n";
    }
}

}  // namespace cvae
