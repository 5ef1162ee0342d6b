#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "cvae/conv.hpp"
#include "cvae/tensor.hpp"

namespace cvae {

// Named learnable tensor; gradients accumulate into value.grad.
struct Param {
    std::string name;
    Tensor value;
    double lr_scale = 1.0;  // per-parameter step-size multiplier

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        value.ensure_grad();
    }
};

struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Reverse-mode tape. Nodes are appended in forward execution order, which is
// by construction a topological order, so backward() is a reverse sweep.
class Tape {
   public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int constant(Tensor v) { return push(std::move(v), false, nullptr); }

    int leaf(Param& p) {
        int id = push(p.value, true, &p);
        return id;
    }

    const Tensor& val(int id) const { return nodes_[id].value; }
    std::vector<double>& grad(int id) {
        Node& n = nodes_[id];
        if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
        return n.grad;
    }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // ---- ops -----------------------------------------------------------

    // x [N,H,W,Cin], w [k,k,Cin,Cout], optional bias [Cout].
    int conv2d(int x, int w, int b, int stride, int pad) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        if (xv.rank() != 4 || wv.rank() != 4)
            throw DimensionError("conv2d: need NHWC input and kkCinCout kernel");
        int k = wv.shape[0], cin = wv.shape[2], cout = wv.shape[3];
        if (wv.shape[1] != k) throw DimensionError("conv2d: kernel must be square");
        if (xv.shape[3] != cin)
            throw DimensionError("conv2d: input channels mismatch kernel Cin");
        ConvGeom g(xv.shape[0], xv.shape[1], xv.shape[2], cin, k, stride, pad);

        auto cols = std::make_shared<std::vector<double>>(g.rows() * g.cols());
        im2col(xv.data.data(), g, cols->data());

        Tensor out({g.n, g.ho, g.wo, cout});
        gemm(false, false, (int)g.rows(), cout, (int)g.cols(), 1.0, cols->data(),
             (int)g.cols(), wv.data.data(), cout, 0.0, out.data.data(), cout);
        if (b >= 0) add_channel_bias(out, val(b), cout);

        int id = push(std::move(out), requires_grad(x) || requires_grad(w) ||
                                          (b >= 0 && requires_grad(b)),
                      nullptr);
        nodes_[id].back = [this, id, x, w, b, g, cout, cols] {
            const auto& gy = grad(id);
            if (requires_grad(x)) {
                std::vector<double> dcols(g.rows() * g.cols());
                gemm(false, true, (int)g.rows(), (int)g.cols(), cout, 1.0,
                     gy.data(), cout, val(w).data.data(), cout, 0.0, dcols.data(),
                     (int)g.cols());
                std::vector<double> dx(val(x).numel(), 0.0);
                col2im(dcols.data(), g, dx.data());
                axpy(dx, grad(x));
            }
            if (requires_grad(w)) {
                std::vector<double> dw(val(w).numel(), 0.0);
                gemm(true, false, (int)g.cols(), cout, (int)g.rows(), 1.0,
                     cols->data(), (int)g.cols(), gy.data(), cout, 0.0, dw.data(),
                     cout);
                axpy(dw, grad(w));
            }
            if (b >= 0 && requires_grad(b)) bias_grad(gy, cout, grad(b));
        };
        return id;
    }

    // x [N,H,W,Cd], w [k,k,Co,Cd] -> [N,H',W',Co]; the adjoint map of conv2d
    // with the same kernel.
    int deconv2d(int x, int w, int b, int stride, int pad) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        if (xv.rank() != 4 || wv.rank() != 4)
            throw DimensionError("deconv2d: need NHWC input and kkCoCd kernel");
        int k = wv.shape[0], co = wv.shape[2], cd = wv.shape[3];
        if (wv.shape[1] != k) throw DimensionError("deconv2d: kernel must be square");
        if (xv.shape[3] != cd)
            throw DimensionError("deconv2d: input channels mismatch kernel Cout");
        int n = xv.shape[0], h = xv.shape[1], wsz = xv.shape[2];
        int ho = (h - 1) * stride - 2 * pad + k;
        int wo = (wsz - 1) * stride - 2 * pad + k;
        if (ho <= 0 || wo <= 0) throw DimensionError("deconv2d: empty output");
        // Geometry of the conv this op is adjoint to: out-space is [ho,wo,co].
        ConvGeom g(n, ho, wo, co, k, stride, pad);
        if (g.ho != h || g.wo != wsz)
            throw DimensionError("deconv2d: inconsistent geometry");

        std::vector<double> dcols(g.rows() * g.cols());
        gemm(false, true, (int)g.rows(), (int)g.cols(), cd, 1.0, xv.data.data(),
             cd, wv.data.data(), cd, 0.0, dcols.data(), (int)g.cols());
        Tensor out({n, ho, wo, co});
        col2im(dcols.data(), g, out.data.data());
        if (b >= 0) add_channel_bias(out, val(b), co);

        int id = push(std::move(out), requires_grad(x) || requires_grad(w) ||
                                          (b >= 0 && requires_grad(b)),
                      nullptr);
        nodes_[id].back = [this, id, x, w, b, g, cd, co] {
            const auto& gy = grad(id);  // [n,ho,wo,co]
            std::vector<double> gycols(g.rows() * g.cols());
            im2col(gy.data(), g, gycols.data());
            if (requires_grad(x)) {
                std::vector<double> dx(val(x).numel());
                gemm(false, false, (int)g.rows(), cd, (int)g.cols(), 1.0,
                     gycols.data(), (int)g.cols(), val(w).data.data(), cd, 0.0,
                     dx.data(), cd);
                axpy(dx, grad(x));
            }
            if (requires_grad(w)) {
                std::vector<double> dw(val(w).numel(), 0.0);
                gemm(true, false, (int)g.cols(), cd, (int)g.rows(), 1.0,
                     gycols.data(), (int)g.cols(), val(x).data.data(), cd, 0.0,
                     dw.data(), cd);
                axpy(dw, grad(w));
            }
            if (b >= 0 && requires_grad(b)) bias_grad(gy, co, grad(b));
        };
        return id;
    }

    // x [N,n], w [n,m], optional bias [m].
    int dense(int x, int w, int b) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        if (xv.rank() != 2 || wv.rank() != 2)
            throw DimensionError("dense: need 2-D input and weights");
        int n = xv.shape[0], in = xv.shape[1], m = wv.shape[1];
        if (wv.shape[0] != in) throw DimensionError("dense: weight rows mismatch");
        Tensor out({n, m});
        gemm(false, false, n, m, in, 1.0, xv.data.data(), in, wv.data.data(), m,
             0.0, out.data.data(), m);
        if (b >= 0) {
            const Tensor& bv = val(b);
            require_shape(bv, {m}, "dense bias");
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < m; ++c) out.data[(std::size_t)r * m + c] += bv.data[c];
        }
        int id = push(std::move(out), requires_grad(x) || requires_grad(w) ||
                                          (b >= 0 && requires_grad(b)),
                      nullptr);
        nodes_[id].back = [this, id, x, w, b, n, in, m] {
            const auto& gy = grad(id);
            if (requires_grad(x)) {
                std::vector<double> dx((std::size_t)n * in);
                gemm(false, true, n, in, m, 1.0, gy.data(), m, val(w).data.data(),
                     m, 0.0, dx.data(), in);
                axpy(dx, grad(x));
            }
            if (requires_grad(w)) {
                std::vector<double> dw((std::size_t)in * m);
                gemm(true, false, in, m, n, 1.0, val(x).data.data(), in, gy.data(),
                     m, 0.0, dw.data(), m);
                axpy(dw, grad(w));
            }
            if (b >= 0 && requires_grad(b)) {
                auto& gb = grad(b);
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < m; ++c) gb[c] += gy[(std::size_t)r * m + c];
            }
        };
        return id;
    }

    int relu(int x) {
        Tensor out = val(x);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        int id = push(std::move(out), requires_grad(x), nullptr);
        nodes_[id].back = [this, id, x] {
            if (!requires_grad(x)) return;
            const auto& gy = grad(id);
            const auto& xv = val(x).data;
            auto& gx = grad(x);
            for (std::size_t i = 0; i < gy.size(); ++i)
                if (xv[i] > 0.0) gx[i] += gy[i];
        };
        return id;
    }

    int sigmoid(int x) {
        Tensor out = val(x);
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        int id = push(std::move(out), requires_grad(x), nullptr);
        nodes_[id].back = [this, id, x] {
            if (!requires_grad(x)) return;
            const auto& gy = grad(id);
            const auto& yv = val(id).data;
            auto& gx = grad(x);
            for (std::size_t i = 0; i < gy.size(); ++i)
                gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
        };
        return id;
    }

    int reshape(int x, std::vector<int> s) {
        if (Tensor::numel_of(s) != val(x).numel())
            throw DimensionError("reshape: element count mismatch");
        Tensor out(std::move(s), val(x).data);
        int id = push(std::move(out), requires_grad(x), nullptr);
        nodes_[id].back = [this, id, x] {
            if (requires_grad(x)) axpy(grad(id), grad(x));
        };
        return id;
    }

    int add(int a, int b) {
        const Tensor& av = val(a);
        if (!av.same_shape(val(b))) throw DimensionError("add: shape mismatch");
        Tensor out = av;
        const auto& bd = val(b).data;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
        int id = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr);
        nodes_[id].back = [this, id, a, b] {
            if (requires_grad(a)) axpy(grad(id), grad(a));
            if (requires_grad(b)) axpy(grad(id), grad(b));
        };
        return id;
    }

    int scale(int x, double s) {
        Tensor out = val(x);
        for (double& v : out.data) v *= s;
        int id = push(std::move(out), requires_grad(x), nullptr);
        nodes_[id].back = [this, id, x, s] {
            if (!requires_grad(x)) return;
            const auto& gy = grad(id);
            auto& gx = grad(x);
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += s * gy[i];
        };
        return id;
    }

    // Weighted sum of scalar nodes.
    int weighted_sum(const std::vector<int>& xs, const std::vector<double>& ws) {
        if (xs.size() != ws.size())
            throw DimensionError("weighted_sum: arity mismatch");
        double acc = 0.0;
        bool rg = false;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (val(xs[i]).numel() != 1)
                throw ContractError("weighted_sum: inputs must be scalar");
            acc += ws[i] * val(xs[i]).data[0];
            rg = rg || requires_grad(xs[i]);
        }
        int id = push(Tensor::scalar(acc), rg, nullptr);
        nodes_[id].back = [this, id, xs, ws] {
            double g = grad(id)[0];
            for (std::size_t i = 0; i < xs.size(); ++i)
                if (requires_grad(xs[i])) grad(xs[i])[0] += ws[i] * g;
        };
        return id;
    }

    // scalar = s * sum_i (pred_i - target_i)^2
    int sum_sq_scaled(int pred, int target, double s) {
        const Tensor& pv = val(pred);
        if (!pv.same_shape(val(target)))
            throw DimensionError("sum_sq: shape mismatch");
        const auto& td = val(target).data;
        double acc = 0.0;
        for (std::size_t i = 0; i < pv.data.size(); ++i) {
            double d = pv.data[i] - td[i];
            acc += d * d;
        }
        int id = push(Tensor::scalar(s * acc),
                      requires_grad(pred) || requires_grad(target), nullptr);
        nodes_[id].back = [this, id, pred, target, s] {
            double g = grad(id)[0] * 2.0 * s;
            const auto& pd = val(pred).data;
            const auto& td = val(target).data;
            if (requires_grad(pred)) {
                auto& gp = grad(pred);
                for (std::size_t i = 0; i < pd.size(); ++i)
                    gp[i] += g * (pd[i] - td[i]);
            }
            if (requires_grad(target)) {
                auto& gt = grad(target);
                for (std::size_t i = 0; i < pd.size(); ++i)
                    gt[i] -= g * (pd[i] - td[i]);
            }
        };
        return id;
    }

    // Mean of squared differences over all elements.
    int mse(int pred, int target) {
        return sum_sq_scaled(pred, target, 1.0 / (double)val(pred).numel());
    }

    // scalar = s * sum of elements
    int reduce_sum(int x, double s = 1.0) {
        double acc = 0.0;
        for (double v : val(x).data) acc += v;
        int id = push(Tensor::scalar(s * acc), requires_grad(x), nullptr);
        nodes_[id].back = [this, id, x, s] {
            if (!requires_grad(x)) return;
            double g = grad(id)[0] * s;
            auto& gx = grad(x);
            for (double& v : gx) v += g;
        };
        return id;
    }

    int reduce_mean(int x) { return reduce_sum(x, 1.0 / (double)val(x).numel()); }

    // x [N,m] -> [N, c1-c0]
    int slice_cols(int x, int c0, int c1) {
        const Tensor& xv = val(x);
        if (xv.rank() != 2 || c0 < 0 || c1 > xv.shape[1] || c0 >= c1)
            throw DimensionError("slice_cols: bad range");
        int n = xv.shape[0], m = xv.shape[1], w = c1 - c0;
        Tensor out({n, w});
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < w; ++c)
                out.data[(std::size_t)r * w + c] = xv.data[(std::size_t)r * m + c0 + c];
        int id = push(std::move(out), requires_grad(x), nullptr);
        nodes_[id].back = [this, id, x, c0, n, m, w] {
            if (!requires_grad(x)) return;
            const auto& gy = grad(id);
            auto& gx = grad(x);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < w; ++c)
                    gx[(std::size_t)r * m + c0 + c] += gy[(std::size_t)r * w + c];
        };
        return id;
    }

    // table: 1-D [L]; idx values in [0,L) -> 1-D [idx.size()]
    int gather(int table, std::vector<int> idx) {
        const Tensor& tv = val(table);
        if (tv.rank() != 1) throw DimensionError("gather: table must be 1-D");
        Tensor out({(int)idx.size()});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= tv.shape[0])
                throw DimensionError("gather: index out of range");
            out.data[i] = tv.data[idx[i]];
        }
        int id = push(std::move(out), requires_grad(table), nullptr);
        nodes_[id].back = [this, id, table, idx = std::move(idx)] {
            if (!requires_grad(table)) return;
            const auto& gy = grad(id);
            auto& gt = grad(table);
            for (std::size_t i = 0; i < idx.size(); ++i) gt[idx[i]] += gy[i];
        };
        return id;
    }

    // x: 1-D [N]; rows -> 1-D [rows.size()]
    int select(int x, std::vector<int> rows) {
        const Tensor& xv = val(x);
        if (xv.rank() != 1) throw DimensionError("select: input must be 1-D");
        Tensor out({(int)rows.size()});
        for (std::size_t i = 0; i < rows.size(); ++i) out.data[i] = xv.data[rows[i]];
        int id = push(std::move(out), requires_grad(x), nullptr);
        nodes_[id].back = [this, id, x, rows = std::move(rows)] {
            if (!requires_grad(x)) return;
            const auto& gy = grad(id);
            auto& gx = grad(x);
            for (std::size_t i = 0; i < rows.size(); ++i) gx[rows[i]] += gy[i];
        };
        return id;
    }

    // [N,1] column view of a 2-D tensor as a 1-D vector.
    int column(int x, int c) {
        const Tensor& xv = val(x);
        if (xv.rank() != 2) throw DimensionError("column: input must be 2-D");
        int n = xv.shape[0], m = xv.shape[1];
        Tensor out({n});
        for (int r = 0; r < n; ++r) out.data[r] = xv.data[(std::size_t)r * m + c];
        int id = push(std::move(out), requires_grad(x), nullptr);
        nodes_[id].back = [this, id, x, c, n, m] {
            if (!requires_grad(x)) return;
            const auto& gy = grad(id);
            auto& gx = grad(x);
            for (int r = 0; r < n; ++r) gx[(std::size_t)r * m + c] += gy[r];
        };
        return id;
    }

    // Elementwise KL(N(mu_q, e^lv_q) || N(mu_p, e^lv_p)); all inputs same shape.
    int kl_diag_elem(int mu_q, int lv_q, int mu_p, int lv_p) {
        const Tensor& mq = val(mu_q);
        if (!mq.same_shape(val(lv_q)) || !mq.same_shape(val(mu_p)) ||
            !mq.same_shape(val(lv_p)))
            throw DimensionError("kl_diag: shape mismatch");
        Tensor out(mq.shape);
        const auto &a = mq.data, &b = val(lv_q).data, &c = val(mu_p).data,
                   &d = val(lv_p).data;
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            double dm = a[i] - c[i];
            out.data[i] =
                0.5 * ((d[i] - b[i]) + (std::exp(b[i]) + dm * dm) * std::exp(-d[i]) - 1.0);
        }
        bool rg = requires_grad(mu_q) || requires_grad(lv_q) ||
                  requires_grad(mu_p) || requires_grad(lv_p);
        int id = push(std::move(out), rg, nullptr);
        nodes_[id].back = [this, id, mu_q, lv_q, mu_p, lv_p] {
            const auto& gy = grad(id);
            const auto& a = val(mu_q).data;
            const auto& b = val(lv_q).data;
            const auto& c = val(mu_p).data;
            const auto& d = val(lv_p).data;
            for (std::size_t i = 0; i < gy.size(); ++i) {
                double g = gy[i];
                if (g == 0.0) continue;
                double dm = a[i] - c[i];
                double ep = std::exp(-d[i]);
                if (requires_grad(mu_q)) grad(mu_q)[i] += g * dm * ep;
                if (requires_grad(mu_p)) grad(mu_p)[i] -= g * dm * ep;
                if (requires_grad(lv_q))
                    grad(lv_q)[i] += g * 0.5 * (std::exp(b[i]) * ep - 1.0);
                if (requires_grad(lv_p))
                    grad(lv_p)[i] +=
                        g * 0.5 * (1.0 - (std::exp(b[i]) + dm * dm) * ep);
            }
        };
        return id;
    }

    // z = mu + exp(lv/2) * eps, eps held constant (reparametrisation).
    int reparam(int mu, int lv, const Tensor& eps) {
        const Tensor& mv = val(mu);
        if (!mv.same_shape(val(lv)) || !mv.same_shape(eps))
            throw DimensionError("reparam: shape mismatch");
        Tensor out(mv.shape);
        const auto& lvd = val(lv).data;
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = mv.data[i] + std::exp(0.5 * lvd[i]) * eps.data[i];
        int id =
            push(std::move(out), requires_grad(mu) || requires_grad(lv), nullptr);
        nodes_[id].back = [this, id, mu, lv, eps] {
            const auto& gy = grad(id);
            if (requires_grad(mu)) axpy(gy, grad(mu));
            if (requires_grad(lv)) {
                const auto& lvd = val(lv).data;
                auto& gl = grad(lv);
                for (std::size_t i = 0; i < gy.size(); ++i)
                    gl[i] += gy[i] * 0.5 * std::exp(0.5 * lvd[i]) * eps.data[i];
            }
        };
        return id;
    }

    // Monte-Carlo KL(q_i || mixture) per element, sampled through the
    // reparametrisation so gradients flow into q and the mixture table.
    // mu_q, lv_q: [n]; mu_tab, lv_tab: [K]; eps: [n, S].
    int kl_mc_mixture(int mu_q, int lv_q, int mu_tab, int lv_tab,
                      const Tensor& eps) {
        const Tensor& mq = val(mu_q);
        const Tensor& mt = val(mu_tab);
        if (mq.rank() != 1 || !mq.same_shape(val(lv_q)))
            throw DimensionError("kl_mc: q must be 1-D pairs");
        if (mt.rank() != 1 || !mt.same_shape(val(lv_tab)))
            throw DimensionError("kl_mc: mixture table must be 1-D pairs");
        int n = mq.shape[0];
        if (eps.rank() != 2 || eps.shape[0] != n)
            throw DimensionError("kl_mc: eps must be [n, samples]");
        int S = eps.shape[1];
        if (S < 1) throw ContractError("kl_mc: need at least one sample");
        int K = mt.shape[0];

        Tensor out({n});
        forward_mc(mq.data, val(lv_q).data, mt.data, val(lv_tab).data, eps, K, S,
                   out.data, nullptr, nullptr, nullptr, nullptr);
        bool rg = requires_grad(mu_q) || requires_grad(lv_q) ||
                  requires_grad(mu_tab) || requires_grad(lv_tab);
        int id = push(std::move(out), rg, nullptr);
        nodes_[id].back = [this, id, mu_q, lv_q, mu_tab, lv_tab, eps, K, S] {
            const auto& gy = grad(id);
            int n = (int)val(mu_q).numel();
            std::vector<double> dmq(n, 0.0), dlq(n, 0.0), dmt(K, 0.0), dlt(K, 0.0);
            std::vector<double> dummy(n);
            forward_mc(val(mu_q).data, val(lv_q).data, val(mu_tab).data,
                       val(lv_tab).data, eps, K, S, dummy, &gy, &dmq, &dlq,
                       nullptr);
            // table grads need the per-sample pass again with responsibilities
            backward_mc_table(val(mu_q).data, val(lv_q).data, val(mu_tab).data,
                              val(lv_tab).data, eps, K, S, gy, dmt, dlt);
            if (requires_grad(mu_q)) axpy(dmq, grad(mu_q));
            if (requires_grad(lv_q)) axpy(dlq, grad(lv_q));
            if (requires_grad(mu_tab)) axpy(dmt, grad(mu_tab));
            if (requires_grad(lv_tab)) axpy(dlt, grad(lv_tab));
        };
        return id;
    }

    // ---- backward ------------------------------------------------------

    void backward(int loss) {
        if (val(loss).numel() != 1)
            throw ContractError("backward: loss must be scalar");
        grad(loss)[0] = 1.0;
        for (int i = (int)nodes_.size() - 1; i >= 0; --i) {
            Node& nd = nodes_[i];
            if (!nd.requires_grad || !nd.back) continue;
            if (nd.grad.empty()) continue;  // never reached from the loss
            nd.back();
        }
        for (Node& nd : nodes_) {
            if (nd.bound && !nd.grad.empty()) {
                nd.bound->value.ensure_grad();
                for (std::size_t i = 0; i < nd.grad.size(); ++i)
                    nd.bound->value.grad[i] += nd.grad[i];
            }
        }
    }

   private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool requires_grad = false;
        Param* bound = nullptr;
        std::function<void()> back;
    };

    std::vector<Node> nodes_;

    int push(Tensor v, bool rg, Param* bound) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = rg;
        n.bound = bound;
        nodes_.push_back(std::move(n));
        return (int)nodes_.size() - 1;
    }

    static void axpy(const std::vector<double>& src, std::vector<double>& dst) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }

    static void add_channel_bias(Tensor& t, const Tensor& b, int c) {
        require_shape(b, {c}, "conv bias");
        std::size_t outer = t.numel() / c;
        for (std::size_t o = 0; o < outer; ++o)
            for (int i = 0; i < c; ++i) t.data[o * c + i] += b.data[i];
    }

    void bias_grad(const std::vector<double>& gy, int c, std::vector<double>& gb) {
        std::size_t outer = gy.size() / c;
        for (std::size_t o = 0; o < outer; ++o)
            for (int i = 0; i < c; ++i) gb[i] += gy[o * c + i];
    }

    // Single pass computing the MC KL estimates; when gy/dmq/dlq are given,
    // also accumulates gradients w.r.t. the q parameters.
    static void forward_mc(const std::vector<double>& mq,
                           const std::vector<double>& lq,
                           const std::vector<double>& mt,
                           const std::vector<double>& lt, const Tensor& eps,
                           int K, int S, std::vector<double>& out,
                           const std::vector<double>* gy,
                           std::vector<double>* dmq, std::vector<double>* dlq,
                           void*) {
        const double logK = std::log((double)K);
        for (std::size_t i = 0; i < mq.size(); ++i) {
            double sigma = std::exp(0.5 * lq[i]);
            double acc = 0.0, accdm = 0.0, accdl = 0.0;
            for (int s = 0; s < S; ++s) {
                double e = eps.data[i * S + s];
                double z = mq[i] + sigma * e;
                double logq = -0.5 * std::log(2.0 * M_PI) - 0.5 * lq[i] - 0.5 * e * e;
                // log m(z) via log-sum-exp, plus d log m / dz
                double mx = -1e300;
                for (int k = 0; k < K; ++k) {
                    double lp = -0.5 * std::log(2.0 * M_PI) - 0.5 * lt[k] -
                                0.5 * (z - mt[k]) * (z - mt[k]) * std::exp(-lt[k]);
                    if (lp > mx) mx = lp;
                }
                double sum = 0.0, dsum = 0.0;
                for (int k = 0; k < K; ++k) {
                    double lp = -0.5 * std::log(2.0 * M_PI) - 0.5 * lt[k] -
                                0.5 * (z - mt[k]) * (z - mt[k]) * std::exp(-lt[k]);
                    double w = std::exp(lp - mx);
                    sum += w;
                    dsum += w * (-(z - mt[k]) * std::exp(-lt[k]));
                }
                double logm = mx + std::log(sum) - logK;
                double dlogm_dz = dsum / sum;
                acc += logq - logm;
                accdm += -dlogm_dz;
                accdl += -0.5 - dlogm_dz * 0.5 * sigma * e;
            }
            out[i] = acc / S;
            if (gy) {
                double g = (*gy)[i] / S;
                (*dmq)[i] += g * accdm;
                (*dlq)[i] += g * accdl;
            }
        }
    }

    static void backward_mc_table(const std::vector<double>& mq,
                                  const std::vector<double>& lq,
                                  const std::vector<double>& mt,
                                  const std::vector<double>& lt,
                                  const Tensor& eps, int K, int S,
                                  const std::vector<double>& gy,
                                  std::vector<double>& dmt,
                                  std::vector<double>& dlt) {
        std::vector<double> w(K);
        for (std::size_t i = 0; i < mq.size(); ++i) {
            double g = gy[i] / S;
            if (g == 0.0) continue;
            double sigma = std::exp(0.5 * lq[i]);
            for (int s = 0; s < S; ++s) {
                double z = mq[i] + sigma * eps.data[i * S + s];
                double mx = -1e300;
                for (int k = 0; k < K; ++k) {
                    double lp = -0.5 * lt[k] -
                                0.5 * (z - mt[k]) * (z - mt[k]) * std::exp(-lt[k]);
                    w[k] = lp;
                    if (lp > mx) mx = lp;
                }
                double sum = 0.0;
                for (int k = 0; k < K; ++k) {
                    w[k] = std::exp(w[k] - mx);
                    sum += w[k];
                }
                for (int k = 0; k < K; ++k) {
                    double r = w[k] / sum;  // responsibility
                    double ev = std::exp(-lt[k]);
                    // d(-log m)/d mu_k and /d lv_k
                    dmt[k] += g * (-r * (z - mt[k]) * ev);
                    dlt[k] += g * (-r * (-0.5 + 0.5 * (z - mt[k]) * (z - mt[k]) * ev));
                }
            }
        }
    }
};

}  // namespace cvae
