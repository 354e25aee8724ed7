#include "tabcsdi/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tabcsdi/threading.hpp"

namespace tabcsdi {

namespace kernels {

void gemm_acc(real_t* C, const real_t* A, const real_t* B, int m, int k, int n) {
    auto rows = [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            real_t* __restrict c = C + i * n;
            const real_t* a = A + i * k;
            int p = 0;
            for (; p + 4 <= k; p += 4) {
                const real_t a0 = a[p], a1 = a[p + 1], a2 = a[p + 2], a3 = a[p + 3];
                const real_t* __restrict b0 = B + static_cast<int64_t>(p) * n;
                const real_t* __restrict b1 = b0 + n;
                const real_t* __restrict b2 = b1 + n;
                const real_t* __restrict b3 = b2 + n;
                for (int j = 0; j < n; ++j) c[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            for (; p < k; ++p) {
                const real_t av = a[p];
                const real_t* __restrict b = B + static_cast<int64_t>(p) * n;
                for (int j = 0; j < n; ++j) c[j] += av * b[j];
            }
        }
    };
    // Dispatch overhead dwarfs small GEMMs; only the fat linear-layer ones
    // are worth fanning out.
    if (static_cast<int64_t>(m) * k * n >= (int64_t(1) << 20) && m >= 4 * num_threads())
        parallel_for(m, rows);
    else
        rows(0, m);
}

Tensor transpose2d(const Tensor& a, int rows, int cols) {
    Tensor out({cols, rows});
    const real_t* src = a.data();
    real_t* dst = out.data();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) dst[static_cast<int64_t>(j) * rows + i] = src[static_cast<int64_t>(i) * cols + j];
    return out;
}

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b, const char* op) {
    size_t nd = std::max(a.size(), b.size());
    std::vector<int> out(nd, 1);
    for (size_t i = 0; i < nd; ++i) {
        int da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        int db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            fail(op, ": shapes ", shape_str(a), " and ", shape_str(b), " do not broadcast");
        out[i] = std::max(da, db);
    }
    return out;
}

namespace {

// Row-major strides padded to `nd` dims, 0 on broadcast (size-1) axes.
std::vector<int64_t> bcast_strides(const std::vector<int>& shape, size_t nd) {
    std::vector<int64_t> strides(nd, 0);
    int64_t s = 1;
    for (size_t i = 0; i < shape.size(); ++i) {
        size_t ax = nd - 1 - i;
        size_t src = shape.size() - 1 - i;
        strides[ax] = shape[src] == 1 ? 0 : s;
        s *= shape[src];
    }
    return strides;
}

template <class F>
void bcast_walk(const std::vector<int>& out_shape, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb,
                F&& inner) {
    size_t nd = out_shape.size();
    int width = out_shape[nd - 1];
    int64_t n_rows = 1;
    for (size_t i = 0; i + 1 < nd; ++i) n_rows *= out_shape[i];
    std::vector<int> coord(nd, 0);
    int64_t oa = 0, ob = 0, oo = 0;
    for (int64_t r = 0; r < n_rows; ++r) {
        inner(oo, oa, ob, width, sa[nd - 1], sb[nd - 1]);
        oo += width;
        // odometer over leading axes
        for (size_t ax = nd - 1; ax-- > 0;) {
            oa += sa[ax];
            ob += sb[ax];
            if (++coord[ax] < out_shape[ax]) break;
            coord[ax] = 0;
            oa -= sa[ax] * out_shape[ax];
            ob -= sb[ax] * out_shape[ax];
        }
    }
}

template <class F>
Tensor bcast_apply(const Tensor& a, const Tensor& b, const char* op, F&& f) {
    if (a.same_shape(b)) {
        Tensor out = Tensor::uninit(a.shape());
        const real_t* pa = a.data();
        const real_t* pb = b.data();
        real_t* po = out.data();
        int64_t n = a.numel();
        for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
        return out;
    }
    std::vector<int> shape = broadcast_shape(a.shape(), b.shape(), op);
    auto sa = bcast_strides(a.shape(), shape.size());
    auto sb = bcast_strides(b.shape(), shape.size());
    Tensor out = Tensor::uninit(shape);
    const real_t* pa = a.data();
    const real_t* pb = b.data();
    real_t* po = out.data();
    bcast_walk(shape, sa, sb, [&](int64_t oo, int64_t oa, int64_t ob, int w, int64_t la, int64_t lb) {
        for (int j = 0; j < w; ++j) po[oo + j] = f(pa[oa + j * la], pb[ob + j * lb]);
    });
    return out;
}

} // namespace

Tensor reduce_to_shape(const Tensor& g, const std::vector<int>& to) {
    if (g.shape() == to) return g;
    Tensor out(to);
    auto st = bcast_strides(to, g.shape().size());
    auto sg = bcast_strides(g.shape(), g.shape().size());
    const real_t* pg = g.data();
    real_t* po = out.data();
    bcast_walk(g.shape(), st, sg, [&](int64_t, int64_t ot, int64_t og, int w, int64_t lt, int64_t lg) {
        for (int j = 0; j < w; ++j) po[ot + j * lt] += pg[og + j * lg];
    });
    return out;
}

} // namespace kernels

using kernels::bcast_strides;

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    return push(std::move(n));
}

void Tape::accumulate(int id, const Tensor& g) {
    Node& n = node(id);
    if (!n.needs_grad) return;
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
    if (!n.grad.same_shape(g))
        fail("backward(", n.op, "): adjoint shape ", shape_str(g.shape()), " vs value ", shape_str(n.value.shape()));
    real_t* dst = n.grad.data();
    const real_t* src = g.data();
    int64_t m = g.numel();
    for (int64_t i = 0; i < m; ++i) dst[i] += src[i];
}

void Tape::accumulate_scaled(int id, const Tensor& g, real_t s) {
    Node& n = node(id);
    if (!n.needs_grad) return;
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
    real_t* dst = n.grad.data();
    const real_t* src = g.data();
    int64_t m = g.numel();
    for (int64_t i = 0; i < m; ++i) dst[i] += s * src[i];
}

const Tensor& Tape::grad(int id) {
    Node& n = node(id);
    if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
    return n.grad;
}

namespace {

int64_t leading_product(const std::vector<int>& shape, size_t keep_last) {
    int64_t n = 1;
    for (size_t i = 0; i + keep_last < shape.size(); ++i) n *= shape[i];
    return n;
}

} // namespace

int Tape::matmul(int a, int b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.ndim() < 2 || tb.ndim() < 2)
        fail("matmul: operands must have >= 2 dims, got ", shape_str(ta.shape()), " and ", shape_str(tb.shape()));
    int m = ta.dim(ta.ndim() - 2);
    int k = ta.dim(ta.ndim() - 1);
    int kb = tb.dim(tb.ndim() - 2);
    int n = tb.dim(tb.ndim() - 1);
    bool rhs2d = tb.ndim() == 2;
    if (k != kb) fail("matmul: inner dims differ, lhs ", shape_str(ta.shape()), " rhs ", shape_str(tb.shape()));
    int64_t batch = leading_product(ta.shape(), 2);
    if (!rhs2d) {
        std::vector<int> la(ta.shape().begin(), ta.shape().end() - 2);
        std::vector<int> lb(tb.shape().begin(), tb.shape().end() - 2);
        if (la != lb) fail("matmul: batch dims differ, lhs ", shape_str(ta.shape()), " rhs ", shape_str(tb.shape()));
    }

    std::vector<int> oshape(ta.shape().begin(), ta.shape().end() - 2);
    oshape.push_back(m);
    oshape.push_back(n);
    // A 2-D rhs applies the same matrix to every slice, so the slices
    // collapse into one tall GEMM over the flattened rows.
    if (rhs2d && batch > 1) {
        m = static_cast<int>(batch * m);
        batch = 1;
    }
    Tensor out(oshape); // gemm_acc accumulates, so the output must start zeroed
    const int64_t a_sz = static_cast<int64_t>(m) * k;
    const int64_t b_sz = static_cast<int64_t>(k) * n;
    const int64_t o_sz = static_cast<int64_t>(m) * n;
    const int64_t slice_ops = static_cast<int64_t>(m) * k * n;
    if (batch > 1 && slice_ops < (int64_t(1) << 20) && batch * slice_ops >= (int64_t(1) << 21)) {
        parallel_for(batch, [&](int64_t s0, int64_t s1) {
            for (int64_t s = s0; s < s1; ++s)
                kernels::gemm_acc(out.data() + s * o_sz, ta.data() + s * a_sz,
                                  tb.data() + (rhs2d ? 0 : s * b_sz), m, k, n);
        });
    } else {
        for (int64_t s = 0; s < batch; ++s)
            kernels::gemm_acc(out.data() + s * o_sz, ta.data() + s * a_sz, tb.data() + (rhs2d ? 0 : s * b_sz), m, k,
                              n);
    }

    Node node;
    node.value = std::move(out);
    node.op = "matmul";
    node.parents = {a, b};
    node.needs_grad = needs_grad(a) || needs_grad(b);
    if (node.needs_grad) {
        node.backward = [a, b, m, k, n, batch, rhs2d, a_sz, b_sz, o_sz](Tape& t, int self) {
            const Tensor& g = t.node(self).grad;
            const Tensor& av = t.val(a);
            const Tensor& bv = t.val(b);
            if (t.needs_grad(a)) {
                Node& na = t.node(a);
                if (na.grad.numel() == 0) na.grad = Tensor(na.value.shape());
                // dA += g @ B^T per slice
                for (int64_t s = 0; s < batch; ++s) {
                    const real_t* bs = bv.data() + (rhs2d ? 0 : s * b_sz);
                    Tensor bt = Tensor::uninit({n, k});
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < n; ++j) bt.data()[static_cast<int64_t>(j) * k + i] = bs[static_cast<int64_t>(i) * n + j];
                    kernels::gemm_acc(na.grad.data() + s * a_sz, g.data() + s * o_sz, bt.data(), m, n, k);
                }
            }
            if (t.needs_grad(b)) {
                Node& nb = t.node(b);
                if (nb.grad.numel() == 0) nb.grad = Tensor(nb.value.shape());
                // dB += A^T @ g per slice (2-D rhs accumulates over slices)
                for (int64_t s = 0; s < batch; ++s) {
                    const real_t* as = av.data() + s * a_sz;
                    Tensor at = Tensor::uninit({k, m});
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < k; ++j) at.data()[static_cast<int64_t>(j) * m + i] = as[static_cast<int64_t>(i) * k + j];
                    kernels::gemm_acc(nb.grad.data() + (rhs2d ? 0 : s * b_sz), at.data(), g.data() + s * o_sz, k, m,
                                      n);
                }
            }
        };
    }
    return push(std::move(node));
}

namespace {

template <class FwdF>
Tensor binary_forward(const Tensor& a, const Tensor& b, const char* op, FwdF&& f) {
    return kernels::bcast_apply(a, b, op, std::forward<FwdF>(f));
}

} // namespace

int Tape::add(int a, int b) {
    Node n;
    n.value = binary_forward(val(a), val(b), "add", [](real_t x, real_t y) { return x + y; });
    n.op = "add";
    n.parents = {a, b};
    n.needs_grad = needs_grad(a) || needs_grad(b);
    if (n.needs_grad) {
        n.backward = [a, b](Tape& t, int self) {
            const Tensor& g = t.node(self).grad;
            if (t.needs_grad(a)) t.accumulate(a, kernels::reduce_to_shape(g, t.val(a).shape()));
            if (t.needs_grad(b)) t.accumulate(b, kernels::reduce_to_shape(g, t.val(b).shape()));
        };
    }
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    Node n;
    n.value = binary_forward(val(a), val(b), "sub", [](real_t x, real_t y) { return x - y; });
    n.op = "sub";
    n.parents = {a, b};
    n.needs_grad = needs_grad(a) || needs_grad(b);
    if (n.needs_grad) {
        n.backward = [a, b](Tape& t, int self) {
            const Tensor& g = t.node(self).grad;
            if (t.needs_grad(a)) t.accumulate(a, kernels::reduce_to_shape(g, t.val(a).shape()));
            if (t.needs_grad(b)) {
                Tensor neg = Tensor::uninit(g.shape());
                const real_t* src = g.data();
                real_t* dst = neg.data();
                for (int64_t i = 0; i < g.numel(); ++i) dst[i] = -src[i];
                t.accumulate(b, kernels::reduce_to_shape(neg, t.val(b).shape()));
            }
        };
    }
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    Node n;
    n.value = binary_forward(val(a), val(b), "mul", [](real_t x, real_t y) { return x * y; });
    n.op = "mul";
    n.parents = {a, b};
    n.needs_grad = needs_grad(a) || needs_grad(b);
    if (n.needs_grad) {
        n.backward = [a, b](Tape& t, int self) {
            const Tensor& g = t.node(self).grad;
            if (t.needs_grad(a)) {
                Tensor gb = kernels::bcast_apply(g, t.val(b), "mul", [](real_t x, real_t y) { return x * y; });
                t.accumulate(a, kernels::reduce_to_shape(gb, t.val(a).shape()));
            }
            if (t.needs_grad(b)) {
                Tensor ga = kernels::bcast_apply(g, t.val(a), "mul", [](real_t x, real_t y) { return x * y; });
                t.accumulate(b, kernels::reduce_to_shape(ga, t.val(b).shape()));
            }
        };
    }
    return push(std::move(n));
}

int Tape::scale(int a, real_t s) {
    Node n;
    n.value = Tensor::uninit(val(a).shape());
    {
        const real_t* src = val(a).data();
        real_t* dst = n.value.data();
        for (int64_t i = 0; i < n.value.numel(); ++i) dst[i] = s * src[i];
    }
    n.op = "scale";
    n.parents = {a};
    n.needs_grad = needs_grad(a);
    if (n.needs_grad) {
        n.backward = [a, s](Tape& t, int self) { t.accumulate_scaled(a, t.node(self).grad, s); };
    }
    return push(std::move(n));
}

int Tape::silu(int a) {
    Node n;
    n.value = Tensor::uninit(val(a).shape());
    {
        const real_t* src = val(a).data();
        real_t* dst = n.value.data();
        for (int64_t i = 0; i < n.value.numel(); ++i) {
            real_t sig = real_t(1) / (real_t(1) + std::exp(-src[i]));
            dst[i] = src[i] * sig;
        }
    }
    n.op = "silu";
    n.parents = {a};
    n.needs_grad = needs_grad(a);
    if (n.needs_grad) {
        n.backward = [a](Tape& t, int self) {
            const Tensor& g = t.node(self).grad;
            const Tensor& x = t.val(a);
            Tensor dx = Tensor::uninit(x.shape());
            const real_t* px = x.data();
            const real_t* pg = g.data();
            real_t* pd = dx.data();
            for (int64_t i = 0; i < x.numel(); ++i) {
                real_t sig = real_t(1) / (real_t(1) + std::exp(-px[i]));
                pd[i] = pg[i] * sig * (real_t(1) + px[i] * (real_t(1) - sig));
            }
            t.accumulate(a, dx);
        };
    }
    return push(std::move(n));
}

int Tape::softmax_lastdim(int a) {
    const Tensor& x = val(a);
    int w = x.dim(x.ndim() - 1);
    int64_t rows = leading_product(x.shape(), 1);
    Node n;
    n.value = Tensor::uninit(x.shape());
    const real_t* px = x.data();
    real_t* py = n.value.data();
    for (int64_t r = 0; r < rows; ++r) {
        const real_t* xr = px + r * w;
        real_t* yr = py + r * w;
        real_t mx = xr[0];
        for (int j = 1; j < w; ++j) mx = std::max(mx, xr[j]);
        real_t sum = 0;
        for (int j = 0; j < w; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (int j = 0; j < w; ++j) yr[j] /= sum;
    }
    n.op = "softmax";
    n.parents = {a};
    n.needs_grad = needs_grad(a);
    if (n.needs_grad) {
        n.backward = [a, w, rows](Tape& t, int self) {
            const Tensor& g = t.node(self).grad;
            const Tensor& y = t.val(self);
            Tensor dx = Tensor::uninit(y.shape());
            const real_t* pg = g.data();
            const real_t* py2 = y.data();
            real_t* pd = dx.data();
            for (int64_t r = 0; r < rows; ++r) {
                const real_t* gr = pg + r * w;
                const real_t* yr = py2 + r * w;
                real_t dot = 0;
                for (int j = 0; j < w; ++j) dot += gr[j] * yr[j];
                real_t* dr = pd + r * w;
                for (int j = 0; j < w; ++j) dr[j] = yr[j] * (gr[j] - dot);
            }
            t.accumulate(a, dx);
        };
    }
    return push(std::move(n));
}

int Tape::layer_norm(int a, int gamma, int beta, real_t eps) {
    const Tensor& x = val(a);
    const Tensor& gm = val(gamma);
    const Tensor& bt = val(beta);
    int w = x.dim(x.ndim() - 1);
    if (gm.numel() != w || bt.numel() != w)
        fail("layer_norm: gamma/beta width ", gm.numel(), "/", bt.numel(), " vs input ", shape_str(x.shape()));
    int64_t rows = leading_product(x.shape(), 1);

    Tensor xhat = Tensor::uninit(x.shape());
    Tensor inv_std = Tensor::uninit({static_cast<int>(rows)});
    Node n;
    n.value = Tensor::uninit(x.shape());
    const real_t* px = x.data();
    real_t* ph = xhat.data();
    real_t* pi = inv_std.data();
    real_t* py = n.value.data();
    for (int64_t r = 0; r < rows; ++r) {
        const real_t* xr = px + r * w;
        real_t mean = 0;
        for (int j = 0; j < w; ++j) mean += xr[j];
        mean /= w;
        real_t var = 0;
        for (int j = 0; j < w; ++j) {
            real_t d = xr[j] - mean;
            var += d * d;
        }
        var /= w;
        real_t is = real_t(1) / std::sqrt(var + eps);
        pi[r] = is;
        real_t* hr = ph + r * w;
        real_t* yr = py + r * w;
        for (int j = 0; j < w; ++j) {
            hr[j] = (xr[j] - mean) * is;
            yr[j] = gm[j] * hr[j] + bt[j];
        }
    }
    n.op = "layer_norm";
    n.parents = {a, gamma, beta};
    n.needs_grad = needs_grad(a) || needs_grad(gamma) || needs_grad(beta);
    if (n.needs_grad) {
        n.backward = [a, gamma, beta, w, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                                                     int self) {
            const Tensor& g = t.node(self).grad;
            const Tensor& gm2 = t.val(gamma);
            const real_t* pg = g.data();
            const real_t* ph2 = xhat.data();
            if (t.needs_grad(gamma) || t.needs_grad(beta)) {
                Tensor dgm({w});
                Tensor dbt({w});
                for (int64_t r = 0; r < rows; ++r) {
                    const real_t* gr = pg + r * w;
                    const real_t* hr = ph2 + r * w;
                    for (int j = 0; j < w; ++j) {
                        dgm[j] += gr[j] * hr[j];
                        dbt[j] += gr[j];
                    }
                }
                if (t.needs_grad(gamma)) t.accumulate(gamma, dgm);
                if (t.needs_grad(beta)) t.accumulate(beta, dbt);
            }
            if (t.needs_grad(a)) {
                Tensor dx = Tensor::uninit(t.val(a).shape());
                real_t* pd = dx.data();
                for (int64_t r = 0; r < rows; ++r) {
                    const real_t* gr = pg + r * w;
                    const real_t* hr = ph2 + r * w;
                    real_t mean_gg = 0, mean_ggh = 0;
                    for (int j = 0; j < w; ++j) {
                        real_t gg = gr[j] * gm2[j];
                        mean_gg += gg;
                        mean_ggh += gg * hr[j];
                    }
                    mean_gg /= w;
                    mean_ggh /= w;
                    real_t is = inv_std[r];
                    real_t* dr = pd + r * w;
                    for (int j = 0; j < w; ++j) {
                        real_t gg = gr[j] * gm2[j];
                        dr[j] = is * (gg - mean_gg - hr[j] * mean_ggh);
                    }
                }
                t.accumulate(a, dx);
            }
        };
    }
    return push(std::move(n));
}

int Tape::reshape(int a, std::vector<int> shape) {
    const Tensor& x = val(a);
    Tensor out(std::move(shape), x.vec());
    if (out.numel() != x.numel())
        fail("reshape: ", shape_str(x.shape()), " -> ", shape_str(out.shape()), " changes element count");
    Node n;
    n.value = std::move(out);
    n.op = "reshape";
    n.parents = {a};
    n.needs_grad = needs_grad(a);
    if (n.needs_grad) {
        n.backward = [a](Tape& t, int self) {
            const Tensor& g = t.node(self).grad;
            t.accumulate(a, Tensor(t.val(a).shape(), g.vec()));
        };
    }
    return push(std::move(n));
}

namespace {

Tensor transpose_axes(const Tensor& x, int ax0, int ax1) {
    std::vector<int> oshape = x.shape();
    std::swap(oshape[static_cast<size_t>(ax0)], oshape[static_cast<size_t>(ax1)]);
    Tensor out = Tensor::uninit(oshape);
    size_t nd = oshape.size();
    std::vector<int64_t> in_strides(nd, 1);
    for (size_t i = nd - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];
    // strides of the input viewed through the output's axis order
    std::vector<int64_t> strides = in_strides;
    std::swap(strides[static_cast<size_t>(ax0)], strides[static_cast<size_t>(ax1)]);
    std::vector<int> coord(nd, 0);
    const real_t* src = x.data();
    real_t* dst = out.data();
    int64_t n = out.numel();
    int64_t off = 0;
    int w = oshape[nd - 1];
    int64_t lw = strides[nd - 1];
    for (int64_t i = 0; i < n; i += w) {
        for (int j = 0; j < w; ++j) dst[i + j] = src[off + j * lw];
        for (size_t ax = nd - 1; ax-- > 0;) {
            off += strides[ax];
            if (++coord[ax] < oshape[ax]) break;
            coord[ax] = 0;
            off -= strides[ax] * oshape[ax];
        }
    }
    return out;
}

} // namespace

int Tape::transpose(int a, int ax0, int ax1) {
    const Tensor& x = val(a);
    if (ax0 < 0 || ax1 < 0 || ax0 >= x.ndim() || ax1 >= x.ndim())
        fail("transpose: axes ", ax0, ",", ax1, " out of range for ", shape_str(x.shape()));
    Node n;
    n.value = transpose_axes(x, ax0, ax1);
    n.op = "transpose";
    n.parents = {a};
    n.needs_grad = needs_grad(a);
    if (n.needs_grad) {
        n.backward = [a, ax0, ax1](Tape& t, int self) {
            t.accumulate(a, transpose_axes(t.node(self).grad, ax0, ax1));
        };
    }
    return push(std::move(n));
}

int Tape::concat_lastdim(const std::vector<int>& parts) {
    if (parts.empty()) fail("concat: no inputs");
    const Tensor& first = val(parts[0]);
    std::vector<int> lead(first.shape().begin(), first.shape().end() - 1);
    int total = 0;
    std::vector<int> widths;
    for (int p : parts) {
        const Tensor& tp = val(p);
        std::vector<int> l(tp.shape().begin(), tp.shape().end() - 1);
        if (l != lead) fail("concat: leading dims differ, ", shape_str(first.shape()), " vs ", shape_str(tp.shape()));
        widths.push_back(tp.dim(tp.ndim() - 1));
        total += widths.back();
    }
    std::vector<int> oshape = lead;
    oshape.push_back(total);
    Tensor out = Tensor::uninit(oshape);
    int64_t rows = leading_product(oshape, 1);
    {
        real_t* po = out.data();
        int off = 0;
        for (size_t i = 0; i < parts.size(); ++i) {
            const real_t* ps = val(parts[i]).data();
            int w = widths[i];
            for (int64_t r = 0; r < rows; ++r)
                std::memcpy(po + r * total + off, ps + r * w, sizeof(real_t) * static_cast<size_t>(w));
            off += w;
        }
    }
    Node n;
    n.value = std::move(out);
    n.op = "concat";
    n.parents = parts;
    n.needs_grad = false;
    for (int p : parts) n.needs_grad = n.needs_grad || needs_grad(p);
    if (n.needs_grad) {
        n.backward = [parts, widths, total, rows](Tape& t, int self) {
            const Tensor& g = t.node(self).grad;
            const real_t* pg = g.data();
            int off = 0;
            for (size_t i = 0; i < parts.size(); ++i) {
                int w = widths[i];
                if (t.needs_grad(parts[i])) {
                    Tensor slice = Tensor::uninit(t.val(parts[i]).shape());
                    real_t* ps = slice.data();
                    for (int64_t r = 0; r < rows; ++r)
                        std::memcpy(ps + r * w, pg + r * total + off, sizeof(real_t) * static_cast<size_t>(w));
                    t.accumulate(parts[i], slice);
                }
                off += w;
            }
        };
    }
    return push(std::move(n));
}

int Tape::embedding_lookup(int table, std::vector<int> indices) {
    const Tensor& tb = val(table);
    if (tb.ndim() != 2) fail("embedding_lookup: table must be 2-D, got ", shape_str(tb.shape()));
    int rows = tb.dim(0);
    int e = tb.dim(1);
    for (int idx : indices)
        if (idx < 0 || idx >= rows) fail("embedding_lookup: index ", idx, " out of range [0,", rows, ")");
    Node n;
    n.value = Tensor::uninit({static_cast<int>(indices.size()), e});
    {
        real_t* po = n.value.data();
        const real_t* ps = tb.data();
        for (size_t i = 0; i < indices.size(); ++i)
            std::memcpy(po + i * e, ps + static_cast<int64_t>(indices[i]) * e, sizeof(real_t) * static_cast<size_t>(e));
    }
    n.op = "embedding_lookup";
    n.parents = {table};
    n.needs_grad = needs_grad(table);
    if (n.needs_grad) {
        n.backward = [table, indices = std::move(indices), e](Tape& t, int self) {
            Node& nt = t.node(table);
            if (nt.grad.numel() == 0) nt.grad = Tensor(nt.value.shape());
            const real_t* pg = t.node(self).grad.data();
            real_t* pd = nt.grad.data();
            for (size_t i = 0; i < indices.size(); ++i) {
                real_t* row = pd + static_cast<int64_t>(indices[i]) * e;
                const real_t* gr = pg + i * e;
                for (int j = 0; j < e; ++j) row[j] += gr[j];
            }
        };
    }
    return push(std::move(n));
}

int Tape::masked_mse(int pred, const Tensor& target, const Tensor& mask) {
    const Tensor& p = val(pred);
    if (!p.same_shape(target) || !p.same_shape(mask))
        fail("masked_mse: shapes differ, pred ", shape_str(p.shape()), " target ", shape_str(target.shape()),
             " mask ", shape_str(mask.shape()));
    double msum = 0;
    for (int64_t i = 0; i < mask.numel(); ++i) msum += static_cast<double>(mask[i]);
    if (msum <= 0) fail("masked_mse: mask selects zero cells");
    double acc = 0;
    for (int64_t i = 0; i < p.numel(); ++i) {
        double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
        acc += d * d * static_cast<double>(mask[i]);
    }
    Node n;
    n.value = Tensor::scalar(static_cast<real_t>(acc / msum));
    n.op = "masked_mse";
    n.parents = {pred};
    n.needs_grad = needs_grad(pred);
    if (n.needs_grad) {
        n.backward = [pred, target, mask, msum](Tape& t, int self) {
            real_t g = t.node(self).grad[0];
            const Tensor& p2 = t.val(pred);
            Tensor dp = Tensor::uninit(p2.shape());
            real_t c = static_cast<real_t>(2.0 / msum) * g;
            for (int64_t i = 0; i < p2.numel(); ++i) dp[i] = c * (p2[i] - target[i]) * mask[i];
            t.accumulate(pred, dp);
        };
    }
    return push(std::move(n));
}

void Tape::backward(int loss) {
    Node& ln = node(loss);
    if (ln.value.numel() != 1) fail("backward: loss must be scalar, got ", shape_str(ln.value.shape()));
    if (!ln.needs_grad)
        fail("backward: loss is detached from every trainable tensor on this tape");
    ln.grad = Tensor::scalar(1);
    for (int id = loss; id >= 0; --id) {
        Node& n = node(id);
        if (n.grad.numel() == 0 || !n.backward) continue;
        n.backward(*this, id);
    }
}

} // namespace tabcsdi
