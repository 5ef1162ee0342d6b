// Command-line driver: dataset generation, training, classification,
// cluster export and latent traversals.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cvae/analysis.hpp"
#include "cvae/classifier.hpp"
#include "cvae/image_io.hpp"
#include "cvae/model.hpp"
#include "cvae/runconfig.hpp"
#include "cvae/sprites.hpp"
#include "cvae/train.hpp"

extern "C" void openblas_set_num_threads(int);

namespace fs = std::filesystem;
using namespace cvae;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCompat = 4;

struct GlobalOpts {
    std::uint64_t seed = 0;
    bool deterministic = false;
    std::string profile = "paper";
    std::string out = "out";
};

void write_manifest(const std::string& dir, const std::string& command,
                    const GlobalOpts& g, const std::string& config_echo,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    std::ofstream f(dir + "/manifest.txt");
    f << "command=" << command << "\n";
    f << "seed=" << g.seed << "\n";
    f << "deterministic=" << (g.deterministic ? 1 : 0) << "\n";
    f << "profile=" << g.profile << "\n";
    for (const auto& in : inputs)
        f << "input=" << in << " hash=" << content_hash(in) << "\n";
    for (const auto& out : outputs) f << "output=" << out << "\n";
    f << "[config]\n" << config_echo;
}

DatasetConfig dataset_config_from(const RunConfig& rc, const GlobalOpts& g,
                                  const std::string& variant, int any_count,
                                  int n_train, int n_dev, int n_test) {
    DatasetConfig cfg = variant == "rainbow" ? DatasetConfig::rainbow_config()
                                             : DatasetConfig::main_config();
    if (variant != "rainbow" && variant != "main")
        throw FormatError("unknown dataset variant: " + variant);
    cfg.seed = g.seed;
    cfg.any_count = any_count;
    if (n_train >= 0) cfg.n_train = n_train;
    if (n_dev >= 0) cfg.n_dev = n_dev;
    if (n_test >= 0) cfg.n_test = n_test;
    cfg.image_size = (int)rc.get_int("dataset.image_size", cfg.image_size);
    return cfg;
}

ModelConfig model_config_from(const RunConfig& rc, const GlobalOpts& g,
                              const DatasetConfig& dcfg,
                              const std::string& variant) {
    ModelConfig mc;
    bool desk = g.profile == "desk";
    mc.image_size = dcfg.image_size;
    mc.filters = (int)rc.get_int("model.filters", desk ? 32 : 64);
    {
        std::string v = rc.get("model.filter_sizes", "");
        std::istringstream is(v);
        std::string tok;
        while (std::getline(is, tok, ','))
            if (!tok.empty()) mc.filter_sizes.push_back(std::stoi(tok));
    }
    mc.dense_size = (int)rc.get_int("model.dense_size", 256);
    mc.conv_layers = (int)rc.get_int("model.conv_layers", 4);
    mc.dense_layers = (int)rc.get_int("model.dense_layers", 2);
    mc.slack_dims = (int)rc.get_int("model.slack_dims", 2);
    mc.recon_scale = rc.get_real("model.recon_scale", 1.0);
    mc.atomic_weight = rc.get_real("model.atomic_weight", 1.0);
    mc.psi_lr_scale = rc.get_real("model.psi_lr_scale", 1.0);
    mc.psi_init_range = rc.get_real("model.psi_init_range", 1.0);
    auto parse4 = [&](const std::string& key, std::array<double, 4>& out) {
        std::string v = rc.get(key, "");
        if (v.empty()) return;
        std::istringstream is(v);
        std::string tok;
        for (int d = 0; d < 4 && std::getline(is, tok, ','); ++d)
            out[d] = std::stod(tok);
    };
    parse4("model.domain_weights", mc.domain_weight);
    parse4("model.domain_psi_lr", mc.domain_psi_lr);
    parse4("model.domain_psi_init", mc.domain_psi_init);
    parse4("model.domain_mu_grid", mc.domain_mu_grid);
    parse4("model.domain_logvar_grid", mc.domain_logvar_grid);
    mc.any_weight = rc.get_real("model.any_weight", 1.0);
    mc.mc_samples = (int)rc.get_int("model.mc_samples", 1000);
    mc.variant = parse_variant(variant);
    for (int d = 0; d < kNumDomains; ++d) mc.vocab[d] = dcfg.domains[d].labels;
    return mc;
}

int cmd_generate(const GlobalOpts& g, const std::string& config_path,
                 const std::string& variant, int any_count, int n_train,
                 int n_dev, int n_test) {
    RunConfig rc = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    DatasetConfig cfg = dataset_config_from(
        rc, g, rc.get("dataset.variant", variant),
        (int)rc.get_int("dataset.any_count", any_count),
        (int)rc.get_int("dataset.n_train", n_train),
        (int)rc.get_int("dataset.n_dev", n_dev),
        (int)rc.get_int("dataset.n_test", n_test));
    Dataset ds = generate_dataset(cfg);
    write_dataset(g.out, ds);
    write_manifest(g.out, "generate", g, dataset_meta_text(cfg), {},
                   {g.out + "/meta", g.out + "/images.bin", g.out + "/labels.csv"});
    std::cout << "generated " << ds.train.size() << "/" << ds.dev.size() << "/"
              << ds.test.size() << " instances (train/dev/test) in " << g.out
              << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& dataset_dir,
              const std::string& config_path, std::string variant, int epochs,
              double lr, const std::string& resume_path, bool verbose) {
    RunConfig rc = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    Dataset ds = read_dataset(dataset_dir);
    if (variant.empty())
        variant = rc.get("model.variant",
                         ds.config.any_count > 0 ? "any" : "conceptual");
    ModelConfig mc = model_config_from(rc, g, ds.config, variant);

    TrainConfig tc;
    bool desk = g.profile == "desk";
    tc.epochs = epochs >= 0 ? epochs : (int)rc.get_int("train.epochs", desk ? 50 : 200);
    tc.batch_size = (int)rc.get_int("train.batch_size", 32);
    tc.adam.lr = lr > 0 ? lr : rc.get_real("train.lr", 1e-3);
    tc.adam.beta1 = rc.get_real("train.beta1", tc.adam.beta1);
    tc.adam.beta2 = rc.get_real("train.beta2", tc.adam.beta2);
    tc.cosine_lr = rc.get_int("train.cosine_lr", 0) != 0;
    tc.lr_floor = rc.get_real("train.lr_floor", tc.lr_floor);
    tc.ramp_start = (int)rc.get_int("train.ramp_start", -1);
    tc.ramp_end = (int)rc.get_int("train.ramp_end", tc.ramp_start);
    tc.recon_scale_final = rc.get_real("train.recon_scale_final", -1.0);
    tc.psi_lr_final = rc.get_real("train.psi_lr_final", 1.0);
    tc.psi_lr_final_logvar = rc.get_real("train.psi_lr_final_logvar", -1.0);
    tc.batch_size2 = (int)rc.get_int("train.batch_size2", 0);
    tc.seed = g.seed;
    tc.eval_every = (int)rc.get_int("train.eval_every", 1);
    tc.verbose = verbose;
    fs::create_directories(g.out);
    tc.diagnostic_path = g.out + "/diagnostic.cvae";

    Model model(mc, g.seed);
    Adam opt(tc.adam);
    int start_epoch = 0;
    if (!resume_path.empty()) {
        Checkpoint ck = read_checkpoint(resume_path);
        model = Model::from_checkpoint(ck);
        start_epoch = load_training_state(ck, model, opt);
    }

    TrainResult res = train(model, ds, tc, opt, start_epoch);
    {
        std::ofstream mf(g.out + "/metrics.csv");
        write_metrics_csv(mf, res.metrics, mc.latent_dims());
    }
    if (!res.ok) {
        std::cerr << "training aborted: " << res.error
                  << " (diagnostic snapshot: " << tc.diagnostic_path << ")\n";
        return kExitNumeric;
    }
    save_training_state(g.out + "/checkpoint.cvae", model, opt, tc.epochs);
    write_manifest(g.out, "train", g, rc.echo(),
                   {dataset_dir + "/meta", dataset_dir + "/images.bin",
                    dataset_dir + "/labels.csv"},
                   {g.out + "/checkpoint.cvae", g.out + "/metrics.csv"});
    std::cout << "trained " << variant << " model for " << tc.epochs
              << " epochs; wrote " << g.out << "/checkpoint.cvae\n";
    if (!res.metrics.empty() && res.metrics.back().dev_accuracy[0] >= 0.0) {
        std::cout << "final dev accuracy:";
        for (int d = 0; d < kNumDomains; ++d)
            std::cout << " " << kDomainNames[d] << "="
                      << res.metrics.back().dev_accuracy[d];
        std::cout << "\n";
    }
    return 0;
}

void check_vocab_compat(const Model& model, const DatasetConfig& dcfg) {
    for (int d = 0; d < kNumDomains; ++d)
        if (model.config().vocab[d] != dcfg.domains[d].labels)
            throw VocabularyError("checkpoint vocabulary does not match dataset");
}

int cmd_classify(const GlobalOpts& g, const std::string& ckpt_path,
                 const std::string& dataset_dir, const std::string& split,
                 bool oracle) {
    Model model = Model::from_checkpoint(read_checkpoint(ckpt_path));
    Dataset ds = read_dataset(dataset_dir);
    check_vocab_compat(model, ds.config);
    fs::create_directories(g.out);
    std::ofstream csv(g.out + "/accuracy.csv");
    csv << "split,domain,accuracy\n";
    auto report = [&](const std::string& name,
                      const std::vector<SpriteInstance>& s) {
        if (s.empty()) return;
        AccuracyTable t;
        if (oracle) {
            // encoder replaced by the ground-truth label's prior
            concepts::PriorTable priors = model.priors();
            t.count = (int)s.size();
            std::array<int, kNumDomains> hits{};
            for (const auto& inst : s)
                for (int d = 0; d < kNumDomains; ++d) {
                    Gauss1D q = priors[d][inst.truth[d]];
                    int best = 0;
                    for (std::size_t l = 0; l < priors[d].size(); ++l)
                        if (kl_gauss1(q, priors[d][l]) < kl_gauss1(q, priors[d][best]))
                            best = (int)l;
                    if (best == inst.truth[d]) ++hits[d];
                }
            for (int d = 0; d < kNumDomains; ++d)
                t.accuracy[d] = (double)hits[d] / t.count;
        } else {
            t = evaluate_accuracy_batched(model, s);
        }
        std::cout << name << ":\n";
        for (int d = 0; d < kNumDomains; ++d) {
            std::printf("  %-9s %.2f\n", kDomainNames[d].c_str(), t.rounded(d));
            csv << name << "," << kDomainNames[d] << "," << t.rounded(d) << "\n";
        }
    };
    if (split == "dev" || split == "both") report("dev", ds.dev);
    if (split == "test" || split == "both") report("test", ds.test);
    write_manifest(g.out, "classify", g, "", {ckpt_path, dataset_dir + "/meta"},
                   {g.out + "/accuracy.csv"});
    return 0;
}

int cmd_clusters(const GlobalOpts& g, const std::string& ckpt_path,
                 const std::string& dataset_dir, const std::string& split) {
    Model model = Model::from_checkpoint(read_checkpoint(ckpt_path));
    Dataset ds = read_dataset(dataset_dir);
    check_vocab_compat(model, ds.config);
    const std::vector<SpriteInstance>* s = &ds.train;
    if (split == "dev") s = &ds.dev;
    else if (split == "test") s = &ds.test;
    fs::create_directories(g.out);
    std::ofstream csv(g.out + "/clusters.csv");
    write_clusters_csv(csv, model, *s, ds.config);
    write_manifest(g.out, "clusters", g, "", {ckpt_path, dataset_dir + "/meta"},
                   {g.out + "/clusters.csv"});
    std::cout << "wrote " << g.out << "/clusters.csv (" << s->size() << " x "
              << model.config().latent_dims() << " rows)\n";
    return 0;
}

int cmd_traverse(const GlobalOpts& g, const std::string& ckpt_path,
                 const std::string& image_path, int dim, int steps,
                 double range) {
    Model model = Model::from_checkpoint(read_checkpoint(ckpt_path));
    if (dim < 0 || dim >= model.config().latent_dims()) {
        std::cerr << "traverse: dim out of range\n";
        return kExitConfig;
    }
    PpmImage img = read_ppm(image_path);
    if (img.width != model.config().image_size ||
        img.height != model.config().image_size)
        throw VocabularyError("traverse: image size does not match checkpoint");
    if (range <= 0.0) {
        // default sweep: 2 sigma of the traversed dim's prior (domains), or 2.0
        range = 2.0;
        if (dim < kNumDomains) {
            concepts::PriorTable priors = model.priors();
            double mx = 0.0;
            for (const auto& p : priors[dim])
                mx = std::max(mx, std::exp(0.5 * p.logvar));
            double lo = 1e300, hi = -1e300;
            for (const auto& p : priors[dim]) {
                lo = std::min(lo, p.mean);
                hi = std::max(hi, p.mean);
            }
            range = std::max(2.0 * mx, 0.5 * (hi - lo) + 2.0 * mx);
        }
    }
    auto strip = traverse_strip(model, img.rgb, dim, steps, range);
    fs::create_directories(g.out);
    int s = model.config().image_size;
    write_ppm(g.out + "/traverse.ppm", s * steps, s, strip);
    write_manifest(g.out, "traverse", g, "", {ckpt_path, image_path},
                   {g.out + "/traverse.ppm"});
    std::cout << "wrote " << g.out << "/traverse.ppm (" << steps << " steps, range "
              << range << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conceptual VAE: datasets, training and analysis"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "master RNG seed");
    app.add_flag("--deterministic", g.deterministic,
                 "force single-threaded, bit-reproducible execution");
    app.add_option("--profile", g.profile, "paper|desk defaults")
        ->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--out", g.out, "output directory");

    // generate
    auto* gen = app.add_subcommand("generate", "generate a shapes dataset");
    std::string gen_config, gen_variant = "main";
    int gen_any = 0, gen_train = -1, gen_dev = -1, gen_test = -1;
    gen->add_option("--config", gen_config, "run-config file");
    gen->add_option("--variant", gen_variant, "main|rainbow");
    gen->add_option("--any", gen_any, "ANY slots per training instance");
    gen->add_option("--train", gen_train, "training instances");
    gen->add_option("--dev", gen_dev, "dev instances");
    gen->add_option("--test", gen_test, "test instances");

    // train
    auto* tr = app.add_subcommand("train", "train a model on a dataset");
    std::string tr_dataset, tr_config, tr_variant, tr_resume;
    int tr_epochs = -1;
    double tr_lr = -1.0;
    bool tr_verbose = false;
    tr->add_option("dataset", tr_dataset, "dataset directory")->required();
    tr->add_option("--config", tr_config, "run-config file");
    tr->add_option("--variant", tr_variant, "vanilla|conceptual|any");
    tr->add_option("--epochs", tr_epochs, "training epochs");
    tr->add_option("--lr", tr_lr, "Adam learning rate");
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");
    tr->add_flag("--verbose", tr_verbose, "per-epoch progress on stderr");

    // classify
    auto* cl = app.add_subcommand("classify", "per-domain classifier accuracy");
    std::string cl_ckpt, cl_dataset, cl_split = "both";
    bool cl_oracle = false;
    cl->add_option("checkpoint", cl_ckpt)->required();
    cl->add_option("dataset", cl_dataset)->required();
    cl->add_option("--split", cl_split, "dev|test|both");
    cl->add_flag("--oracle", cl_oracle, "replace the encoder by ground truth");

    // clusters
    auto* cc = app.add_subcommand("clusters", "export encoder means/log-vars");
    std::string cc_ckpt, cc_dataset, cc_split = "train";
    cc->add_option("checkpoint", cc_ckpt)->required();
    cc->add_option("dataset", cc_dataset)->required();
    cc->add_option("--split", cc_split, "train|dev|test");

    // traverse
    auto* tv = app.add_subcommand("traverse", "latent traversal image strip");
    std::string tv_ckpt, tv_image;
    int tv_dim = 0, tv_steps = 10;
    double tv_range = -1.0;
    tv->add_option("checkpoint", tv_ckpt)->required();
    tv->add_option("image", tv_image, "input image (PPM P6)")->required();
    tv->add_option("--dim", tv_dim, "latent dimension to sweep")->required();
    tv->add_option("--steps", tv_steps, "sweep points");
    tv->add_option("--range", tv_range, "sweep half-range (default 2 prior sigma)");

    CLI11_PARSE(app, argc, argv);
    openblas_set_num_threads(1);  // deterministic reductions

    try {
        if (*gen)
            return cmd_generate(g, gen_config, gen_variant, gen_any, gen_train,
                                gen_dev, gen_test);
        if (*tr)
            return cmd_train(g, tr_dataset, tr_config, tr_variant, tr_epochs,
                             tr_lr, tr_resume, tr_verbose);
        if (*cl) return cmd_classify(g, cl_ckpt, cl_dataset, cl_split, cl_oracle);
        if (*cc) return cmd_clusters(g, cc_ckpt, cc_dataset, cc_split);
        if (*tv) return cmd_traverse(g, tv_ckpt, tv_image, tv_dim, tv_steps, tv_range);
    } catch (const VocabularyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCompat;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return 0;
}
