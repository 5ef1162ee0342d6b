#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <sstream>
#include <string>
#include <vector>

#include "cvae/checkpoint.hpp"
#include "cvae/concepts.hpp"
#include "cvae/gaussian.hpp"
#include "cvae/rng.hpp"
#include "cvae/sprites.hpp"
#include "cvae/tape.hpp"

namespace cvae {

enum class Variant { Vanilla, Conceptual, AnyMixture };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Vanilla: return "vanilla";
        case Variant::Conceptual: return "conceptual";
        case Variant::AnyMixture: return "any";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "vanilla") return Variant::Vanilla;
    if (s == "conceptual") return Variant::Conceptual;
    if (s == "any") return Variant::AnyMixture;
    throw std::invalid_argument("unknown model variant: " + s);
}

struct ModelConfig {
    int image_size = 64;
    int channels = 3;
    int conv_layers = 4;
    int filters = 64;
    std::vector<int> filter_sizes;  // per-conv-layer override; empty = filters
    int kernel = 4, stride = 2, pad = 1;
    int dense_layers = 2;
    int dense_size = 256;
    int slack_dims = 2;
    Variant variant = Variant::Conceptual;
    double recon_scale = 1.0;     // multiplies the per-instance pixel SSE
    double atomic_weight = 1.0;   // KL weight on atomic-labelled dims
    double psi_lr_scale = 1.0;    // step-size multiplier for the prior table
    double psi_init_range = 1.0;  // prior means drawn from U[-r, r]
    // prior log-variance init per domain: 0 = uniform draws from U[-7,0],
    // 1 = evenly spaced grid over [-4.5,-0.5] in random label order
    // (distinct sigma targets), 2 = tight near -4 with a small jitter,
    // 3 = narrow grid over [-6,-3] (distinct and tight), 4 = fixed
    // alternating pattern over [-6,-3] (adjacent labels maximally distinct)
    std::array<double, kNumDomains> domain_logvar_grid{0.0, 0.0, 0.0, 0.0};
    // per-domain multipliers on top of the global knobs above
    std::array<double, kNumDomains> domain_weight{1.0, 1.0, 1.0, 1.0};
    std::array<double, kNumDomains> domain_psi_lr{1.0, 1.0, 1.0, 1.0};
    std::array<double, kNumDomains> domain_psi_init{1.0, 1.0, 1.0, 1.0};
    // per-domain mean init: 0 = uniform draws, 1 = evenly spaced over
    // [-1,1] in random label order (guaranteed gaps, no order information)
    std::array<double, kNumDomains> domain_mu_grid{0.0, 0.0, 0.0, 0.0};
    double any_weight = 1.0;      // KL weight on ANY-labelled dims
    int mc_samples = 1000;        // per ANY dimension
    std::array<std::vector<std::string>, kNumDomains> vocab;

    int layer_filters(int i) const {
        return i < (int)filter_sizes.size() ? filter_sizes[i] : filters;
    }
    int top_filters() const { return layer_filters(conv_layers - 1); }
    int domain_dims() const { return kNumDomains; }
    int latent_dims() const { return kNumDomains + slack_dims; }
    int feature_side() const {
        int s = image_size;
        for (int i = 0; i < conv_layers; ++i) s = (s + 2 * pad - kernel) / stride + 1;
        return s;
    }
};

struct LossBreakdown {
    double reconstruction = 0.0;
    std::vector<double> kl_per_dim;  // weighted contribution per latent dim
    double total = 0.0;
};

// Encoder/decoder CNN pair with the learnable conceptual prior table psi.
class Model {
   public:
    explicit Model(ModelConfig cfg, std::uint64_t init_seed = 1)
        : cfg_(std::move(cfg)) {
        Rng rng(splitmix64(init_seed) ^ 0xc0ffee);
        build_params(rng);
    }

    const ModelConfig& config() const { return cfg_; }
    long decoder_calls() const { return decoder_calls_; }

    void set_recon_scale(double v) { cfg_.recon_scale = v; }
    void set_psi_lr_scale(double v) { set_psi_lr_scale(v, v); }
    void set_psi_lr_scale(double v_mu, double v_logvar) {
        cfg_.psi_lr_scale = v_mu;
        for (Param& p : params_)
            for (int d = 0; d < kNumDomains; ++d)
                if (p.name.rfind("psi." + std::string(kDomainNames[d]), 0) == 0) {
                    bool is_mu = p.name.size() >= 3 &&
                                 p.name.compare(p.name.size() - 3, 3, ".mu") == 0;
                    p.lr_scale = (is_mu ? v_mu : v_logvar) * cfg_.domain_psi_lr[d];
                }
    }

    std::vector<Param*> parameters() {
        std::vector<Param*> out;
        for (Param& p : params_) out.push_back(&p);
        return out;
    }
    Param& param(const std::string& name) {
        for (Param& p : params_)
            if (p.name == name) return p;
        throw ContractError("no such parameter: " + name);
    }
    const Param& param(const std::string& name) const {
        return const_cast<Model*>(this)->param(name);
    }
    bool has_param(const std::string& name) const {
        for (const Param& p : params_)
            if (p.name == name) return true;
        return false;
    }

    void zero_grads() {
        for (Param& p : params_) p.value.zero_grad();
    }

    // ---- graph builders -------------------------------------------------

    struct Encoding {
        int mu, logvar;  // tape ids, each [N, latent]
    };

    Encoding encode_graph(Tape& t, int x) const {
        const Tensor& xv = t.val(x);
        if (xv.rank() != 4 || xv.shape[1] != cfg_.image_size ||
            xv.shape[2] != cfg_.image_size || xv.shape[3] != cfg_.channels)
            throw DimensionError("encode: image batch shape mismatch");
        int n = xv.shape[0];
        int h = x;
        for (int i = 0; i < cfg_.conv_layers; ++i) {
            h = t.conv2d(h, leaf(t, "enc.conv" + std::to_string(i) + ".w"),
                         leaf(t, "enc.conv" + std::to_string(i) + ".b"),
                         cfg_.stride, cfg_.pad);
            h = t.relu(h);
        }
        int fs = cfg_.feature_side();
        h = t.reshape(h, {n, fs * fs * cfg_.top_filters()});
        for (int i = 0; i < cfg_.dense_layers; ++i) {
            h = t.dense(h, leaf(t, "enc.fc" + std::to_string(i) + ".w"),
                        leaf(t, "enc.fc" + std::to_string(i) + ".b"));
            h = t.relu(h);
        }
        h = t.dense(h, leaf(t, "enc.out.w"), leaf(t, "enc.out.b"));
        int L = cfg_.latent_dims();
        return {t.slice_cols(h, 0, L), t.slice_cols(h, L, 2 * L)};
    }

    int decode_graph(Tape& t, int z) const {
        const Tensor& zv = t.val(z);
        if (zv.rank() != 2 || zv.shape[1] != cfg_.latent_dims())
            throw DimensionError("decode: latent shape mismatch");
        ++decoder_calls_;
        int n = zv.shape[0];
        int h = z;
        for (int i = 0; i < cfg_.dense_layers; ++i) {
            h = t.dense(h, leaf(t, "dec.fc" + std::to_string(i) + ".w"),
                        leaf(t, "dec.fc" + std::to_string(i) + ".b"));
            h = t.relu(h);
        }
        int fs = cfg_.feature_side();
        h = t.dense(h, leaf(t, "dec.feat.w"), leaf(t, "dec.feat.b"));
        h = t.relu(h);
        h = t.reshape(h, {n, fs, fs, cfg_.top_filters()});
        for (int i = 0; i < cfg_.conv_layers; ++i) {
            bool last = i + 1 == cfg_.conv_layers;
            h = t.deconv2d(h, leaf(t, "dec.deconv" + std::to_string(i) + ".w"),
                           leaf(t, "dec.deconv" + std::to_string(i) + ".b"),
                           cfg_.stride, cfg_.pad);
            h = last ? t.sigmoid(h) : t.relu(h);
        }
        return h;
    }

    // ---- inference ------------------------------------------------------

    DiagGaussian encode(const std::vector<std::uint8_t>& image) const {
        Tape t;
        int x = t.constant(image_to_tensor(image));
        Encoding e = encode_graph(t, x);
        int L = cfg_.latent_dims();
        DiagGaussian q{std::vector<double>((std::size_t)L),
                       std::vector<double>((std::size_t)L)};
        for (int i = 0; i < L; ++i) {
            q.mean[i] = t.val(e.mu).data[i];
            q.logvar[i] = t.val(e.logvar).data[i];
        }
        return q;
    }

    std::vector<double> decode(const std::vector<double>& z) const {
        Tape t;
        int zi = t.constant(Tensor({1, cfg_.latent_dims()}, z));
        int x = decode_graph(t, zi);
        return t.val(x).data;
    }

    Tensor image_to_tensor(const std::vector<std::uint8_t>& image) const {
        int s = cfg_.image_size;
        Tensor x({1, s, s, cfg_.channels});
        if (image.size() != x.numel())
            throw DimensionError("image size mismatch");
        for (std::size_t i = 0; i < image.size(); ++i)
            x.data[i] = image[i] / 255.0;
        return x;
    }

    // ---- losses ---------------------------------------------------------

    struct BatchLabels {
        std::vector<ConceptLabel> labels;  // one per instance
    };

    // Builds the variant's loss on the given tape. Labels are ignored for
    // the vanilla variant. Returns the loss node id and fills `out`.
    int loss_graph(Tape& t, int x, const std::vector<ConceptLabel>& labels,
                   Rng& rng, LossBreakdown& out) const {
        int n = t.val(x).shape[0];
        int L = cfg_.latent_dims();
        Encoding e = encode_graph(t, x);

        // reconstruction through one reparametrised sample
        Tensor eps({n, L});
        for (double& v : eps.data) v = rng.normal();
        int z = t.reparam(e.mu, e.logvar, eps);
        int xhat = decode_graph(t, z);
        int recon = t.sum_sq_scaled(xhat, x, cfg_.recon_scale / n);

        std::vector<int> terms = {recon};
        std::vector<double> weights = {1.0};
        out.kl_per_dim.assign(L, 0.0);
        std::vector<int> kl_ids(L, -1);
        std::vector<double> kl_w(L, 1.0);

        for (int d = 0; d < L; ++d) {
            int mu_d = t.column(e.mu, d);
            int lv_d = t.column(e.logvar, d);
            bool slack = d >= kNumDomains || cfg_.variant == Variant::Vanilla;
            if (slack) {
                int zero = t.constant(Tensor({n}));
                int kl = t.kl_diag_elem(mu_d, lv_d, zero, zero);
                kl_ids[d] = t.reduce_sum(kl, 1.0 / n);
                kl_w[d] = 1.0;
            } else {
                kl_ids[d] = domain_kl(t, mu_d, lv_d, labels, d, n, rng, kl_w[d]);
            }
            terms.push_back(kl_ids[d]);
            weights.push_back(kl_w[d]);
        }
        int total = t.weighted_sum(terms, weights);
        out.reconstruction = t.val(recon).data[0];
        for (int d = 0; d < L; ++d)
            out.kl_per_dim[d] = kl_w[d] * t.val(kl_ids[d]).data[0];
        out.total = t.val(total).data[0];
        return total;
    }

    // ---- checkpointing --------------------------------------------------

    Checkpoint to_checkpoint(const std::string& extra_meta = "") const {
        Checkpoint ck;
        for (const Param& p : params_) ck.tensors.emplace_back(p.name, p.value);
        std::ostringstream os;
        os << "format=conceptual-vae-model\n";
        os << "variant=" << variant_name(cfg_.variant) << "\n";
        os << "image_size=" << cfg_.image_size << "\n";
        os << "channels=" << cfg_.channels << "\n";
        os << "conv_layers=" << cfg_.conv_layers << "\n";
        os << "filters=" << cfg_.filters << "\n";
        if (!cfg_.filter_sizes.empty()) {
            os << "filter_sizes=";
            for (std::size_t i = 0; i < cfg_.filter_sizes.size(); ++i)
                os << (i ? "," : "") << cfg_.filter_sizes[i];
            os << "\n";
        }
        os << "kernel=" << cfg_.kernel << "\n";
        os << "stride=" << cfg_.stride << "\n";
        os << "pad=" << cfg_.pad << "\n";
        os << "dense_layers=" << cfg_.dense_layers << "\n";
        os << "dense_size=" << cfg_.dense_size << "\n";
        os << "slack_dims=" << cfg_.slack_dims << "\n";
        os.precision(17);
        os << "recon_scale=" << cfg_.recon_scale << "\n";
        os << "atomic_weight=" << cfg_.atomic_weight << "\n";
        os << "psi_lr_scale=" << cfg_.psi_lr_scale << "\n";
        os << "psi_init_range=" << cfg_.psi_init_range << "\n";
        os << "domain_mu_grid=";
        for (int d = 0; d < kNumDomains; ++d)
            os << (d ? "," : "") << cfg_.domain_mu_grid[d];
        os << "\n";
        os << "domain_logvar_grid=";
        for (int d = 0; d < kNumDomains; ++d)
            os << (d ? "," : "") << cfg_.domain_logvar_grid[d];
        os << "\n";
        os << "domain_weight=";
        for (int d = 0; d < kNumDomains; ++d)
            os << (d ? "," : "") << cfg_.domain_weight[d];
        os << "\n";
        os << "domain_psi_lr=";
        for (int d = 0; d < kNumDomains; ++d)
            os << (d ? "," : "") << cfg_.domain_psi_lr[d];
        os << "\n";
        os << "domain_psi_init=";
        for (int d = 0; d < kNumDomains; ++d)
            os << (d ? "," : "") << cfg_.domain_psi_init[d];
        os << "\n";
        os << "any_weight=" << cfg_.any_weight << "\n";
        os << "mc_samples=" << cfg_.mc_samples << "\n";
        for (int d = 0; d < kNumDomains; ++d) {
            os << "vocab." << kDomainNames[d] << "=";
            for (std::size_t i = 0; i < cfg_.vocab[d].size(); ++i)
                os << (i ? "," : "") << cfg_.vocab[d][i];
            os << "\n";
        }
        os << extra_meta;
        ck.metadata = os.str();
        return ck;
    }

    static Model from_checkpoint(const Checkpoint& ck) {
        ModelConfig cfg;
        std::istringstream is(ck.metadata);
        std::string line;
        while (std::getline(is, line)) {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(0, eq), val = line.substr(eq + 1);
            if (key == "variant") cfg.variant = parse_variant(val);
            else if (key == "image_size") cfg.image_size = std::stoi(val);
            else if (key == "channels") cfg.channels = std::stoi(val);
            else if (key == "conv_layers") cfg.conv_layers = std::stoi(val);
            else if (key == "filters") cfg.filters = std::stoi(val);
            else if (key == "filter_sizes") {
                cfg.filter_sizes.clear();
                for (const auto& p : split_str(val, ','))
                    cfg.filter_sizes.push_back(std::stoi(p));
            }
            else if (key == "kernel") cfg.kernel = std::stoi(val);
            else if (key == "stride") cfg.stride = std::stoi(val);
            else if (key == "pad") cfg.pad = std::stoi(val);
            else if (key == "dense_layers") cfg.dense_layers = std::stoi(val);
            else if (key == "dense_size") cfg.dense_size = std::stoi(val);
            else if (key == "slack_dims") cfg.slack_dims = std::stoi(val);
            else if (key == "recon_scale") cfg.recon_scale = std::stod(val);
            else if (key == "atomic_weight") cfg.atomic_weight = std::stod(val);
            else if (key == "psi_lr_scale") cfg.psi_lr_scale = std::stod(val);
            else if (key == "psi_init_range") cfg.psi_init_range = std::stod(val);
            else if (key == "domain_weight" || key == "domain_psi_lr" ||
                     key == "domain_psi_init" || key == "domain_mu_grid" ||
                     key == "domain_logvar_grid") {
                auto parts = split_str(val, ',');
                auto& arr = key == "domain_weight"
                                ? cfg.domain_weight
                                : key == "domain_psi_lr"
                                      ? cfg.domain_psi_lr
                                      : key == "domain_psi_init"
                                            ? cfg.domain_psi_init
                                            : key == "domain_mu_grid"
                                                  ? cfg.domain_mu_grid
                                                  : cfg.domain_logvar_grid;
                for (int d = 0; d < kNumDomains && d < (int)parts.size(); ++d)
                    arr[d] = std::stod(parts[d]);
            }
            else if (key == "any_weight") cfg.any_weight = std::stod(val);
            else if (key == "mc_samples") cfg.mc_samples = std::stoi(val);
            else if (key.rfind("vocab.", 0) == 0) {
                std::string dn = key.substr(6);
                for (int d = 0; d < kNumDomains; ++d)
                    if (dn == kDomainNames[d]) cfg.vocab[d] = split_str(val, ',');
            }
        }
        Model m(cfg);
        for (Param& p : m.params_) {
            const Tensor* t = ck.find(p.name);
            if (!t) throw FormatError("checkpoint: missing tensor " + p.name);
            if (t->shape != p.value.shape)
                throw FormatError("checkpoint: shape mismatch for " + p.name);
            p.value.data = t->data;
        }
        return m;
    }

    // psi as plain Gaussians, for the classifier and analysis
    concepts::PriorTable priors() const {
        concepts::PriorTable out;
        for (int d = 0; d < kNumDomains; ++d) {
            const Param& mu = param("psi." + kDomainNames[d] + ".mu");
            const Param& lv = param("psi." + kDomainNames[d] + ".logvar");
            for (std::size_t i = 0; i < mu.value.numel(); ++i)
                out[d].push_back({mu.value.data[i], lv.value.data[i]});
        }
        return out;
    }

   private:
    ModelConfig cfg_;
    mutable std::deque<Param> params_;
    mutable long decoder_calls_ = 0;

    int leaf(Tape& t, const std::string& name) const {
        return t.leaf(const_cast<Model*>(this)->param(name));
    }

    // weighted per-domain KL (analytic for atomic labels, MC for ANY)
    int domain_kl(Tape& t, int mu_d, int lv_d,
                  const std::vector<ConceptLabel>& labels, int d, int n, Rng& rng,
                  double& weight_out) const {
        if ((int)labels.size() != n)
            throw ContractError("loss: labels/batch size mismatch");
        std::vector<int> atomic_rows, any_rows, atomic_idx;
        for (int i = 0; i < n; ++i) {
            int l = labels[i][d];
            if (l == kAnyLabel) {
                if (cfg_.variant != Variant::AnyMixture)
                    throw VocabularyError("loss: ANY label needs the mixture variant");
                any_rows.push_back(i);
            } else {
                if (l < 0 || l >= (int)cfg_.vocab[d].size())
                    throw VocabularyError("loss: label out of vocabulary");
                atomic_rows.push_back(i);
                atomic_idx.push_back(l);
            }
        }
        int psi_mu = leaf(t, "psi." + kDomainNames[d] + ".mu");
        int psi_lv = leaf(t, "psi." + kDomainNames[d] + ".logvar");

        std::vector<int> parts;
        std::vector<double> pw;
        if (!atomic_rows.empty()) {
            int mq = t.select(mu_d, atomic_rows);
            int lq = t.select(lv_d, atomic_rows);
            int mp = t.gather(psi_mu, atomic_idx);
            int lp = t.gather(psi_lv, atomic_idx);
            int kl = t.kl_diag_elem(mq, lq, mp, lp);
            parts.push_back(t.reduce_sum(kl, 1.0 / n));
            pw.push_back(cfg_.atomic_weight * cfg_.domain_weight[d]);
        }
        if (!any_rows.empty()) {
            int mq = t.select(mu_d, any_rows);
            int lq = t.select(lv_d, any_rows);
            Tensor eps({(int)any_rows.size(), cfg_.mc_samples});
            for (double& v : eps.data) v = rng.normal();
            int kl = t.kl_mc_mixture(mq, lq, psi_mu, psi_lv, eps);
            parts.push_back(t.reduce_sum(kl, 1.0 / n));
            pw.push_back(cfg_.any_weight * cfg_.domain_weight[d]);
        }
        weight_out = 1.0;  // weights folded into the term itself
        if (parts.empty()) return t.constant(Tensor::scalar(0.0));
        return t.weighted_sum(parts, pw);
    }

    void build_params(Rng& rng) {
        auto he_uniform = [&](std::vector<int> shape, int fan_in) {
            Tensor t(shape);
            double bound = std::sqrt(6.0 / fan_in);
            for (double& v : t.data) v = rng.uniform(-bound, bound);
            return t;
        };
        int k = cfg_.kernel, c = cfg_.channels;
        int in_c = c;
        for (int i = 0; i < cfg_.conv_layers; ++i) {
            int f = cfg_.layer_filters(i);
            params_.emplace_back("enc.conv" + std::to_string(i) + ".w",
                                 he_uniform({k, k, in_c, f}, k * k * in_c));
            params_.emplace_back("enc.conv" + std::to_string(i) + ".b",
                                 Tensor({f}));
            in_c = f;
        }
        int fs = cfg_.feature_side();
        int feat = fs * fs * cfg_.top_filters();
        int in_d = feat;
        for (int i = 0; i < cfg_.dense_layers; ++i) {
            params_.emplace_back("enc.fc" + std::to_string(i) + ".w",
                                 he_uniform({in_d, cfg_.dense_size}, in_d));
            params_.emplace_back("enc.fc" + std::to_string(i) + ".b",
                                 Tensor({cfg_.dense_size}));
            in_d = cfg_.dense_size;
        }
        int L = cfg_.latent_dims();
        params_.emplace_back("enc.out.w", he_uniform({in_d, 2 * L}, in_d));
        params_.emplace_back("enc.out.b", Tensor({2 * L}));

        in_d = L;
        for (int i = 0; i < cfg_.dense_layers; ++i) {
            params_.emplace_back("dec.fc" + std::to_string(i) + ".w",
                                 he_uniform({in_d, cfg_.dense_size}, in_d));
            params_.emplace_back("dec.fc" + std::to_string(i) + ".b",
                                 Tensor({cfg_.dense_size}));
            in_d = cfg_.dense_size;
        }
        params_.emplace_back("dec.feat.w", he_uniform({in_d, feat}, in_d));
        params_.emplace_back("dec.feat.b", Tensor({feat}));
        for (int i = 0; i < cfg_.conv_layers; ++i) {
            bool last = i + 1 == cfg_.conv_layers;
            int in_f = cfg_.layer_filters(cfg_.conv_layers - 1 - i);
            int out_c = last ? c : cfg_.layer_filters(cfg_.conv_layers - 2 - i);
            // deconv kernel [k,k,Cout,Cin]; fan-in of the adjoint conv
            params_.emplace_back("dec.deconv" + std::to_string(i) + ".w",
                                 he_uniform({k, k, out_c, in_f}, k * k * in_f));
            params_.emplace_back("dec.deconv" + std::to_string(i) + ".b",
                                 Tensor({out_c}));
        }

        for (int d = 0; d < kNumDomains; ++d) {
            int vs = (int)std::max<std::size_t>(cfg_.vocab[d].size(), 1);
            Tensor mu({vs}), lv({vs});
            double r = cfg_.psi_init_range * cfg_.domain_psi_init[d];
            if (cfg_.domain_mu_grid[d] > 0.0 && vs > 1) {
                for (int i = 0; i < vs; ++i)
                    mu.data[i] = r * (-1.0 + 2.0 * i / (vs - 1));
                for (int i = vs - 1; i > 0; --i)
                    std::swap(mu.data[i], mu.data[rng.uniform_int(0, i)]);
            } else {
                for (double& v : mu.data) v = rng.uniform(-r, r);
            }
            double mode = cfg_.domain_logvar_grid[d];
            if (mode >= 4.0 && vs > 1) {
                // low/high ends first, interior values for odd indices
                std::vector<double> grid(vs);
                for (int i = 0; i < vs; ++i) grid[i] = -6.0 + 3.0 * i / (vs - 1);
                int lo = 0, hi = vs - 1;
                for (int i = 0; i < vs; ++i)
                    lv.data[i] = (i % 2 == 0) ? grid[lo++] : grid[hi--];
            } else if (mode >= 3.0 && vs > 1) {
                for (int i = 0; i < vs; ++i)
                    lv.data[i] = -6.0 + 3.0 * i / (vs - 1);
                for (int i = vs - 1; i > 0; --i)
                    std::swap(lv.data[i], lv.data[rng.uniform_int(0, i)]);
            } else if (mode >= 2.0) {
                for (double& v : lv.data) v = -4.0 + rng.uniform(-0.5, 0.5);
            } else if (mode > 0.0 && vs > 1) {
                for (int i = 0; i < vs; ++i)
                    lv.data[i] = -4.5 + 4.0 * i / (vs - 1);
                for (int i = vs - 1; i > 0; --i)
                    std::swap(lv.data[i], lv.data[rng.uniform_int(0, i)]);
            } else {
                for (double& v : lv.data) v = rng.uniform(-7.0, 0.0);
            }
            params_.emplace_back("psi." + kDomainNames[d] + ".mu", std::move(mu));
            params_.emplace_back("psi." + kDomainNames[d] + ".logvar",
                                 std::move(lv));
            params_[params_.size() - 2].lr_scale =
                cfg_.psi_lr_scale * cfg_.domain_psi_lr[d];
            params_.back().lr_scale = cfg_.psi_lr_scale * cfg_.domain_psi_lr[d];
        }
    }
};

}  // namespace cvae
