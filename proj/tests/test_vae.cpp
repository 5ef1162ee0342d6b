#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "cvae/classifier.hpp"
#include "cvae/model.hpp"
#include "cvae/train.hpp"

using namespace cvae;

namespace {

// Small model over 8x8 images for fast exact checks.
ModelConfig mini_config(Variant variant = Variant::Conceptual) {
    ModelConfig mc;
    mc.image_size = 8;
    mc.conv_layers = 2;
    mc.filters = 4;
    mc.dense_size = 16;
    mc.slack_dims = 2;
    mc.variant = variant;
    mc.mc_samples = 20;
    mc.vocab[0] = {"red", "green", "blue"};
    mc.vocab[1] = {"small", "medium", "large"};
    mc.vocab[2] = {"square", "triangle", "circle"};
    mc.vocab[3] = {"bottom", "centre", "top"};
    return mc;
}

Tensor random_batch(int n, int size, Rng& rng) {
    Tensor x({n, size, size, 3});
    for (double& v : x.data) v = rng.uniform(0.0, 1.0);
    return x;
}

DatasetConfig mini_dataset_config() {
    DatasetConfig cfg = DatasetConfig::main_config();
    cfg.image_size = 8;
    cfg.n_train = 12;
    cfg.n_dev = 6;
    cfg.n_test = 6;
    return cfg;
}

}  // namespace

TEST_CASE("loss decomposes into reconstruction plus per-dim kl") {
    Model m(mini_config(), 3);
    Rng data_rng(4);
    Tape t;
    int x = t.constant(random_batch(3, 8, data_rng));
    std::vector<ConceptLabel> labels{{0, 1, 2, 0}, {1, 0, 0, 2}, {2, 2, 1, 1}};
    Rng rng(5);
    LossBreakdown lb;
    int loss = m.loss_graph(t, x, labels, rng, lb);
    double sum = lb.reconstruction +
                 std::accumulate(lb.kl_per_dim.begin(), lb.kl_per_dim.end(), 0.0);
    REQUIRE(lb.total == Catch::Approx(sum).epsilon(1e-12));
    REQUIRE(lb.total == Catch::Approx(t.val(loss).data[0]).epsilon(1e-14));
    REQUIRE(lb.kl_per_dim.size() == 6);
}

TEST_CASE("matching encoder and prior gives zero kl") {
    // direct identity from the learned-prior table values
    Gauss1D top{1.07, -1.82};
    REQUIRE(kl_gauss1(top, top) == Catch::Approx(0.0).margin(1e-15));
    // and kl is shift-invariant, so classification is too
    Gauss1D q{0.3, -0.5}, p{1.0, -1.2};
    double shifted = kl_gauss1({q.mean + 5.0, q.logvar}, {p.mean + 5.0, p.logvar});
    REQUIRE(shifted == Catch::Approx(kl_gauss1(q, p)).epsilon(1e-12));
}

TEST_CASE("gradients reach the prior table") {
    Model m(mini_config(), 7);
    Rng data_rng(8);
    Tape t;
    int x = t.constant(random_batch(2, 8, data_rng));
    std::vector<ConceptLabel> labels{{0, 1, 2, 0}, {1, 0, 0, 2}};
    Rng rng(9);
    LossBreakdown lb;
    int loss = m.loss_graph(t, x, labels, rng, lb);
    m.zero_grads();
    t.backward(loss);
    for (int d = 0; d < kNumDomains; ++d) {
        const auto& g = m.param("psi." + kDomainNames[d] + ".mu").value.grad;
        double mag = 0.0;
        for (double v : g) mag += std::abs(v);
        REQUIRE(mag > 0.0);
    }
    // encoder and decoder weights receive gradient too
    for (const char* name : {"enc.conv0.w", "enc.out.w", "dec.fc0.w", "dec.deconv1.w"}) {
        const auto& g = m.param(name).value.grad;
        double mag = 0.0;
        for (double v : g) mag += std::abs(v);
        REQUIRE(mag > 0.0);
    }
}

TEST_CASE("all-atomic mixture loss equals the conceptual loss") {
    ModelConfig any_cfg = mini_config(Variant::AnyMixture);
    ModelConfig con_cfg = mini_config(Variant::Conceptual);
    Model ma(any_cfg, 11), mc(con_cfg, 11);  // identical init
    Rng data_rng(12);
    Tensor batch = random_batch(4, 8, data_rng);
    std::vector<ConceptLabel> labels{
        {0, 1, 2, 0}, {1, 0, 0, 2}, {2, 2, 1, 1}, {0, 0, 0, 0}};
    LossBreakdown la, lc;
    {
        Tape t;
        Rng rng(13);
        ma.loss_graph(t, t.constant(batch), labels, rng, la);
    }
    {
        Tape t;
        Rng rng(13);
        mc.loss_graph(t, t.constant(batch), labels, rng, lc);
    }
    REQUIRE(la.total == Catch::Approx(lc.total).epsilon(1e-12));
}

TEST_CASE("mixture kl with a single component matches the analytic kl") {
    // tape-level: large fixed-eps MC vs closed form
    Tape t;
    Param mq("mq", Tensor({1}, {0.4}));
    Param lq("lq", Tensor({1}, {-0.6}));
    Param mt("mt", Tensor({1}, {-0.3}));
    Param lt("lt", Tensor({1}, {0.1}));
    Rng rng(44);
    Tensor eps({1, 60000});
    for (double& v : eps.data) v = rng.normal();
    int kl = t.kl_mc_mixture(t.leaf(mq), t.leaf(lq), t.leaf(mt), t.leaf(lt), eps);
    double exact = kl_gauss1({0.4, -0.6}, {-0.3, 0.1});
    REQUIRE(t.val(kl).data[0] == Catch::Approx(exact).margin(0.01));
}

TEST_CASE("any labels outside the mixture variant are rejected") {
    Model m(mini_config(Variant::Conceptual), 2);
    Rng data_rng(3);
    Tape t;
    int x = t.constant(random_batch(1, 8, data_rng));
    std::vector<ConceptLabel> labels{{kAnyLabel, 1, 2, 0}};
    Rng rng(4);
    LossBreakdown lb;
    REQUIRE_THROWS_AS(m.loss_graph(t, x, labels, rng, lb), VocabularyError);
}

TEST_CASE("classifier is consistent with the kl score tables") {
    Model m(mini_config(), 21);
    DatasetConfig dcfg = mini_dataset_config();
    Rng rng(22);
    auto inst = sample_instance({1, 2, 0, 1}, dcfg, rng);
    ClassificationResult r = classify(m, inst.image);
    for (int d = 0; d < kNumDomains; ++d) {
        REQUIRE(r.kl[d].size() == 3);
        for (std::size_t l = 0; l < r.kl[d].size(); ++l)
            REQUIRE(r.kl[d][r.chosen[d]] <= r.kl[d][l]);
    }
}

TEST_CASE("per-domain argmin equals the brute-force joint argmin") {
    Model m(mini_config(), 31);
    DatasetConfig dcfg = mini_dataset_config();
    Rng rng(32);
    concepts::PriorTable priors = m.priors();
    for (int i = 0; i < 50; ++i) {
        ConceptLabel lab;
        for (int d = 0; d < kNumDomains; ++d) lab[d] = rng.uniform_int(0, 2);
        auto inst = sample_instance(lab, dcfg, rng);
        ClassificationResult r = classify(m, inst.image);
        DiagGaussian q = m.encode(inst.image);
        // exhaustive search over all 81 joint labels of the summed domain kl
        double best = 1e300;
        std::array<int, 4> best_lab{};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c)
                    for (int d4 = 0; d4 < 3; ++d4) {
                        std::array<int, 4> cand{a, b, c, d4};
                        double acc = 0.0;
                        for (int d = 0; d < 4; ++d)
                            acc += kl_gauss1(q.component(d), priors[d][cand[d]]);
                        if (acc < best) {
                            best = acc;
                            best_lab = cand;
                        }
                    }
        REQUIRE(r.chosen == best_lab);
    }
}

TEST_CASE("classification with ground-truth encodings is perfect") {
    Model m(mini_config(), 41);
    // install the published prior table
    concepts::PriorTable table;
    table[0] = {{-0.77, -4.23}, {-0.08, -4.31}, {0.83, -3.56}};
    table[1] = {{-0.93, -3.01}, {-0.20, -3.62}, {0.56, -2.82}};
    table[2] = {{-0.49, -5.31}, {0.64, -4.91}, {0.09, -5.08}};
    table[3] = {{1.07, -1.82}, {0.04, -3.33}, {-0.81, -2.37}};
    for (int d = 0; d < kNumDomains; ++d) {
        auto& mu = m.param("psi." + kDomainNames[d] + ".mu").value;
        auto& lv = m.param("psi." + kDomainNames[d] + ".logvar").value;
        for (int l = 0; l < 3; ++l) {
            mu.data[l] = table[d][l].mean;
            lv.data[l] = table[d][l].logvar;
        }
    }
    concepts::PriorTable priors = m.priors();
    for (int d = 0; d < kNumDomains; ++d)
        for (int truth = 0; truth < 3; ++truth) {
            Gauss1D q = priors[d][truth];
            int best = 0;
            for (int l = 0; l < 3; ++l)
                if (kl_gauss1(q, priors[d][l]) < kl_gauss1(q, priors[d][best]))
                    best = l;
            REQUIRE(best == truth);
        }
}

TEST_CASE("classification never invokes the decoder") {
    Model m(mini_config(), 51);
    DatasetConfig dcfg = mini_dataset_config();
    Rng rng(52);
    std::vector<SpriteInstance> split;
    for (int i = 0; i < 5; ++i)
        split.push_back(sample_instance({0, 1, 2, 0}, dcfg, rng));
    long before = m.decoder_calls();
    evaluate_accuracy(m, split);
    REQUIRE(m.decoder_calls() == before);
}

TEST_CASE("checkpoint round trip preserves the model") {
    Model m(mini_config(Variant::AnyMixture), 61);
    Checkpoint ck = m.to_checkpoint();
    Model back = Model::from_checkpoint(ck);
    REQUIRE(back.config().variant == Variant::AnyMixture);
    REQUIRE(back.config().image_size == 8);
    REQUIRE(back.config().vocab[0] == m.config().vocab[0]);
    DatasetConfig dcfg = mini_dataset_config();
    Rng rng(62);
    auto inst = sample_instance({2, 0, 1, 2}, dcfg, rng);
    DiagGaussian q1 = m.encode(inst.image);
    DiagGaussian q2 = back.encode(inst.image);
    REQUIRE(q1.mean == q2.mean);
    REQUIRE(q1.logvar == q2.logvar);
}

TEST_CASE("miniature end-to-end gradient check") {
    Model m(mini_config(Variant::AnyMixture), 71);
    Rng data_rng(72);
    Tensor batch = random_batch(2, 8, data_rng);
    std::vector<ConceptLabel> labels{{0, kAnyLabel, 2, 0}, {1, 0, kAnyLabel, 2}};

    auto eval = [&](LossBreakdown& lb) {
        Tape t;
        Rng rng(73);  // frozen noise: the loss is deterministic in the params
        return t.val(m.loss_graph(t, t.constant(batch), labels, rng, lb)).data[0];
    };
    {
        Tape t;
        Rng rng(73);
        LossBreakdown lb;
        int loss = m.loss_graph(t, t.constant(batch), labels, rng, lb);
        m.zero_grads();
        t.backward(loss);
    }
    // spot-check a spread of parameters with central differences
    Rng pick(74);
    int checked = 0;
    for (Param* p : m.parameters()) {
        for (int rep = 0; rep < 2; ++rep) {
            std::size_t i = (std::size_t)pick.uniform_int(0, (int)p->value.numel() - 1);
            double orig = p->value.data[i];
            double h = 1e-4;
            LossBreakdown lb;
            p->value.data[i] = orig + h;
            double fp = eval(lb);
            p->value.data[i] = orig - h;
            double fm = eval(lb);
            p->value.data[i] = orig;
            double fd = (fp - fm) / (2.0 * h);
            double an = p->value.grad[i];
            double denom = std::max({1.0, std::abs(fd), std::abs(an)});
            INFO(p->name << "[" << i << "] fd=" << fd << " tape=" << an);
            REQUIRE(std::abs(fd - an) / denom <= 1e-3);
            ++checked;
        }
    }
    REQUIRE(checked > 40);
}

TEST_CASE("per-parameter step-size scaling shrinks the adam update") {
    Param a("a", Tensor({1}, {1.0}));
    Param b("b", Tensor({1}, {1.0}));
    b.lr_scale = 0.25;
    a.value.ensure_grad();
    b.value.ensure_grad();
    a.value.grad[0] = b.value.grad[0] = 0.7;
    std::vector<Param*> ps{&a, &b};
    Adam opt;
    REQUIRE(opt.step(ps));
    double da = 1.0 - a.value.data[0];
    double db = 1.0 - b.value.data[0];
    REQUIRE(db == Catch::Approx(0.25 * da).epsilon(1e-12));
}

TEST_CASE("per-layer filter sizes shape the conv stack and survive a round trip") {
    ModelConfig mc = mini_config();
    mc.filter_sizes = {4, 8};
    Model m(mc, 91);
    REQUIRE(m.param("enc.conv0.w").value.shape == std::vector<int>{4, 4, 3, 4});
    REQUIRE(m.param("enc.conv1.w").value.shape == std::vector<int>{4, 4, 4, 8});
    // decoder mirrors the encoder widths
    REQUIRE(m.param("dec.deconv0.w").value.shape == std::vector<int>{4, 4, 4, 8});
    REQUIRE(m.param("dec.deconv1.w").value.shape == std::vector<int>{4, 4, 3, 4});
    DatasetConfig dcfg = mini_dataset_config();
    Rng rng(92);
    auto inst = sample_instance({0, 1, 2, 0}, dcfg, rng);
    DiagGaussian q = m.encode(inst.image);
    auto img = m.decode(q.mean);
    REQUIRE(img.size() == 8u * 8u * 3u);
    Model back = Model::from_checkpoint(m.to_checkpoint());
    REQUIRE(back.config().filter_sizes == mc.filter_sizes);
    DiagGaussian q2 = back.encode(inst.image);
    REQUIRE(q.mean == q2.mean);
}

TEST_CASE("cosine decay and the two-phase schedule update the knobs") {
    DatasetConfig dcfg = mini_dataset_config();
    dcfg.seed = 93;
    Dataset ds = generate_dataset(dcfg);
    ModelConfig mcfg = mini_config();
    mcfg.recon_scale = 0.1;
    mcfg.psi_lr_scale = 0.05;
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 4;
    tc.seed = 94;
    tc.eval_every = 0;
    tc.cosine_lr = true;
    tc.lr_floor = 0.1;
    tc.ramp_start = 2;
    tc.ramp_end = 4;
    tc.recon_scale_final = 0.5;
    tc.psi_lr_final = 1.0;
    Model m(mcfg, 95);
    Adam opt;
    REQUIRE(train(m, ds, tc, opt).ok);
    // final epoch sits at the end of both schedules
    REQUIRE(opt.config().lr == Catch::Approx(tc.adam.lr * tc.lr_floor));
    REQUIRE(m.config().recon_scale == Catch::Approx(0.5));
    REQUIRE(m.config().psi_lr_scale == Catch::Approx(1.0));
    REQUIRE(m.param("psi.colour.mu").lr_scale == Catch::Approx(1.0));
}

TEST_CASE("training improves the loss and resume is exact") {
    DatasetConfig dcfg = mini_dataset_config();
    dcfg.seed = 81;
    Dataset ds = generate_dataset(dcfg);
    ModelConfig mcfg = mini_config();
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 4;
    tc.seed = 82;
    tc.eval_every = 0;

    Model m1(mcfg, 83);
    Adam o1;
    TrainResult r1 = train(m1, ds, tc, o1);
    REQUIRE(r1.ok);
    REQUIRE(r1.metrics.size() == 4);
    REQUIRE(r1.metrics.back().total < r1.metrics.front().total);

    // run the same schedule with a save/load break after epoch 2
    Model m2(mcfg, 83);
    Adam o2;
    TrainConfig tc_half = tc;
    tc_half.epochs = 2;
    REQUIRE(train(m2, ds, tc_half, o2).ok);
    std::string path =
        (std::filesystem::temp_directory_path() / "vae_resume_test.cvae").string();
    save_training_state(path, m2, o2, 2);
    Checkpoint ck = read_checkpoint(path);
    Model m3 = Model::from_checkpoint(ck);
    Adam o3;
    int start = load_training_state(ck, m3, o3);
    REQUIRE(start == 2);
    REQUIRE(train(m3, ds, tc, o3, start).ok);

    auto ps1 = m1.parameters();
    auto ps3 = m3.parameters();
    REQUIRE(ps1.size() == ps3.size());
    for (std::size_t i = 0; i < ps1.size(); ++i) {
        REQUIRE(ps1[i]->name == ps3[i]->name);
        REQUIRE(ps1[i]->value.data == ps3[i]->value.data);  // bitwise
    }
    std::filesystem::remove(path);
}
