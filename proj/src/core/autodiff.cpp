#include "core/autodiff.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "core/check.hpp"
#include "geometry/rigid_motion.hpp"

namespace prism {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const Tensor& Var::value() const {
    PRISM_CHECK(defined(), "use of undefined Var");
    return graph->value(*this);
}

int Graph::push(Tensor value, bool requires_grad, std::function<void()> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad_buffer(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad.defined()) n.grad = Tensor(n.value.dims());
    return n.grad;
}

void Graph::check_owned(Var v) const {
    PRISM_CHECK(v.graph == this && v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
                "Var does not belong to this graph");
}

Var Graph::constant(Tensor t) { return {this, push(std::move(t), false)}; }
Var Graph::leaf(Tensor t) { return {this, push(std::move(t), true)}; }

const Tensor& Graph::value(Var v) const {
    check_owned(v);
    return node(v.id).value;
}

bool Graph::requires_grad(Var v) const {
    check_owned(v);
    return node(v.id).requires_grad;
}

Tensor Graph::grad(Var v) const {
    check_owned(v);
    const Node& n = node(v.id);
    return n.grad.defined() ? n.grad : Tensor(n.value.dims());
}

void Graph::backward(Var root) {
    check_owned(root);
    PRISM_CHECK(node(root.id).value.numel() == 1, "backward root must be scalar");
    PRISM_CHECK(node(root.id).requires_grad, "backward root does not require grad");
    for (Node& n : nodes_) n.grad = Tensor();
    grad_buffer(root.id)[0] = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.requires_grad && n.grad.defined() && n.backprop) n.backprop();
    }
}

// ---------------------------------------------------------------------------
// elementwise binary ops

namespace {
bool broadcast_ok(const Tensor& a, const Tensor& b) {
    return a.same_dims(b) || a.numel() == 1 || b.numel() == 1;
}
} // namespace

Var Graph::add(Var va, Var vb) {
    check_owned(va);
    check_owned(vb);
    const Tensor& a = node(va.id).value;
    const Tensor& b = node(vb.id).value;
    PRISM_CHECK(broadcast_ok(a, b), "shape mismatch in add");
    const bool sa = a.numel() == 1 && b.numel() > 1;
    const bool sb = b.numel() == 1 && a.numel() > 1;
    Tensor out((sa ? b : a).dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[sa ? 0 : i] + b[sb ? 0 : i];
    const bool need = node(va.id).requires_grad || node(vb.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = va.id, ib = vb.id, sa, sb, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            if (nodes_[static_cast<size_t>(ia)].requires_grad) {
                Tensor& ga = grad_buffer(ia);
                for (std::int64_t i = 0; i < n; ++i) ga[sa ? 0 : i] += go[i];
            }
            if (nodes_[static_cast<size_t>(ib)].requires_grad) {
                Tensor& gb = grad_buffer(ib);
                for (std::int64_t i = 0; i < n; ++i) gb[sb ? 0 : i] += go[i];
            }
        };
    }
    return {this, id};
}

Var Graph::sub(Var va, Var vb) {
    check_owned(va);
    check_owned(vb);
    const Tensor& a = node(va.id).value;
    const Tensor& b = node(vb.id).value;
    PRISM_CHECK(broadcast_ok(a, b), "shape mismatch in sub");
    const bool sa = a.numel() == 1 && b.numel() > 1;
    const bool sb = b.numel() == 1 && a.numel() > 1;
    Tensor out((sa ? b : a).dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[sa ? 0 : i] - b[sb ? 0 : i];
    const bool need = node(va.id).requires_grad || node(vb.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = va.id, ib = vb.id, sa, sb, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            if (nodes_[static_cast<size_t>(ia)].requires_grad) {
                Tensor& ga = grad_buffer(ia);
                for (std::int64_t i = 0; i < n; ++i) ga[sa ? 0 : i] += go[i];
            }
            if (nodes_[static_cast<size_t>(ib)].requires_grad) {
                Tensor& gb = grad_buffer(ib);
                for (std::int64_t i = 0; i < n; ++i) gb[sb ? 0 : i] -= go[i];
            }
        };
    }
    return {this, id};
}

Var Graph::mul(Var va, Var vb) {
    check_owned(va);
    check_owned(vb);
    const Tensor& a = node(va.id).value;
    const Tensor& b = node(vb.id).value;
    PRISM_CHECK(broadcast_ok(a, b), "shape mismatch in mul");
    const bool sa = a.numel() == 1 && b.numel() > 1;
    const bool sb = b.numel() == 1 && a.numel() > 1;
    Tensor out((sa ? b : a).dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[sa ? 0 : i] * b[sb ? 0 : i];
    const bool need = node(va.id).requires_grad || node(vb.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = va.id, ib = vb.id, sa, sb, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& av = nodes_[static_cast<size_t>(ia)].value;
            const Tensor& bv = nodes_[static_cast<size_t>(ib)].value;
            if (nodes_[static_cast<size_t>(ia)].requires_grad) {
                Tensor& ga = grad_buffer(ia);
                for (std::int64_t i = 0; i < n; ++i) ga[sa ? 0 : i] += go[i] * bv[sb ? 0 : i];
            }
            if (nodes_[static_cast<size_t>(ib)].requires_grad) {
                Tensor& gb = grad_buffer(ib);
                for (std::int64_t i = 0; i < n; ++i) gb[sb ? 0 : i] += go[i] * av[sa ? 0 : i];
            }
        };
    }
    return {this, id};
}

Var Graph::div(Var va, Var vb) {
    check_owned(va);
    check_owned(vb);
    const Tensor& a = node(va.id).value;
    const Tensor& b = node(vb.id).value;
    PRISM_CHECK(broadcast_ok(a, b), "shape mismatch in div");
    const bool sa = a.numel() == 1 && b.numel() > 1;
    const bool sb = b.numel() == 1 && a.numel() > 1;
    Tensor out((sa ? b : a).dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[sa ? 0 : i] / b[sb ? 0 : i];
    const bool need = node(va.id).requires_grad || node(vb.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = va.id, ib = vb.id, sa, sb, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& av = nodes_[static_cast<size_t>(ia)].value;
            const Tensor& bv = nodes_[static_cast<size_t>(ib)].value;
            if (nodes_[static_cast<size_t>(ia)].requires_grad) {
                Tensor& ga = grad_buffer(ia);
                for (std::int64_t i = 0; i < n; ++i) ga[sa ? 0 : i] += go[i] / bv[sb ? 0 : i];
            }
            if (nodes_[static_cast<size_t>(ib)].requires_grad) {
                Tensor& gb = grad_buffer(ib);
                for (std::int64_t i = 0; i < n; ++i) {
                    const double bb = bv[sb ? 0 : i];
                    gb[sb ? 0 : i] -= go[i] * av[sa ? 0 : i] / (bb * bb);
                }
            }
        };
    }
    return {this, id};
}

// ---------------------------------------------------------------------------
// elementwise unary ops

Var Graph::abs(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = std::fabs(x[i]);
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& x = nodes_[static_cast<size_t>(ia)].value;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i)
                ga[i] += x[i] > 0.0 ? go[i] : (x[i] < 0.0 ? -go[i] : 0.0);
        };
    }
    return {this, id};
}

Var Graph::exp(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& y = nodes_[static_cast<size_t>(id)].value;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i] * y[i];
        };
    }
    return {this, id};
}

Var Graph::sigmoid(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& y = nodes_[static_cast<size_t>(id)].value;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i] * y[i] * (1.0 - y[i]);
        };
    }
    return {this, id};
}

Var Graph::relu(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& x = nodes_[static_cast<size_t>(ia)].value;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i)
                if (x[i] > 0.0) ga[i] += go[i];
        };
    }
    return {this, id};
}

Var Graph::elu(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : std::expm1(x[i]);
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& x = nodes_[static_cast<size_t>(ia)].value;
            const Tensor& y = nodes_[static_cast<size_t>(id)].value;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i)
                ga[i] += x[i] > 0.0 ? go[i] : go[i] * (y[i] + 1.0);
        };
    }
    return {this, id};
}

Var Graph::reciprocal(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = 1.0 / x[i];
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& y = nodes_[static_cast<size_t>(id)].value;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i) ga[i] -= go[i] * y[i] * y[i];
        };
    }
    return {this, id};
}

Var Graph::add_scalar(Var a, double s) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] + s;
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i];
        };
    }
    return {this, id};
}

Var Graph::mul_scalar(Var a, double s) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] * s;
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n, s] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i) ga[i] += go[i] * s;
        };
    }
    return {this, id};
}

Var Graph::clamp_min(Var a, double lo) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    Tensor out(x.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = x[i] >= lo ? x[i] : lo;
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, n, lo] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& x = nodes_[static_cast<size_t>(ia)].value;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < n; ++i)
                if (x[i] >= lo) ga[i] += go[i];
        };
    }
    return {this, id};
}

Var Graph::minimum(Var va, Var vb) {
    check_owned(va);
    check_owned(vb);
    const Tensor& a = node(va.id).value;
    const Tensor& b = node(vb.id).value;
    PRISM_CHECK(a.same_dims(b), "shape mismatch in minimum");
    Tensor out(a.dims());
    const std::int64_t n = out.numel();
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] <= b[i] ? a[i] : b[i];
    const bool need = node(va.id).requires_grad || node(vb.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = va.id, ib = vb.id, n] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& a = nodes_[static_cast<size_t>(ia)].value;
            const Tensor& b = nodes_[static_cast<size_t>(ib)].value;
            const bool na = nodes_[static_cast<size_t>(ia)].requires_grad;
            const bool nb = nodes_[static_cast<size_t>(ib)].requires_grad;
            Tensor* ga = na ? &grad_buffer(ia) : nullptr;
            Tensor* gb = nb ? &grad_buffer(ib) : nullptr;
            for (std::int64_t i = 0; i < n; ++i) {
                if (a[i] <= b[i]) {
                    if (ga) (*ga)[i] += go[i];
                } else if (gb) {
                    (*gb)[i] += go[i];
                }
            }
        };
    }
    return {this, id};
}

// ---------------------------------------------------------------------------
// reductions and shape ops

Var Graph::sum(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
    const bool need = node(a.id).requires_grad;
    const int id = push(Tensor::scalar(acc), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id] {
            const double g = nodes_[static_cast<size_t>(id)].grad[0];
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
        };
    }
    return {this, id};
}

Var Graph::mean(Var a) {
    check_owned(a);
    const std::int64_t n = node(a.id).value.numel();
    PRISM_CHECK(n > 0, "mean of empty tensor");
    return mul_scalar(sum(a), 1.0 / static_cast<double>(n));
}

Var Graph::mean_channels(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    PRISM_CHECK(x.rank() == 3, "mean_channels expects (C,H,W)");
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out({1, h, w});
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (std::int64_t p = 0; p < hw; ++p) {
        double acc = 0.0;
        for (int ch = 0; ch < c; ++ch) acc += x[ch * hw + p];
        out[p] = acc / c;
    }
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, c, hw] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            const double inv = 1.0 / c;
            for (int ch = 0; ch < c; ++ch)
                for (std::int64_t p = 0; p < hw; ++p) ga[ch * hw + p] += go[p] * inv;
        };
    }
    return {this, id};
}

Var Graph::mean_hw(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    PRISM_CHECK(x.rank() == 3, "mean_hw expects (C,H,W)");
    const int c = x.channels(), h = x.height(), w = x.width();
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out({c, 1, 1});
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::int64_t p = 0; p < hw; ++p) acc += x[ch * hw + p];
        out[ch] = acc / static_cast<double>(hw);
    }
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, c, hw] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            const double inv = 1.0 / static_cast<double>(hw);
            for (int ch = 0; ch < c; ++ch)
                for (std::int64_t p = 0; p < hw; ++p) ga[ch * hw + p] += go[ch] * inv;
        };
    }
    return {this, id};
}

Var Graph::concat_channels(const std::vector<Var>& parts) {
    PRISM_CHECK(!parts.empty(), "concat of zero tensors");
    for (Var v : parts) check_owned(v);
    const Tensor& first = node(parts[0].id).value;
    PRISM_CHECK(first.rank() == 3, "concat_channels expects (C,H,W)");
    const int h = first.height(), w = first.width();
    int total_c = 0;
    bool need = false;
    for (Var v : parts) {
        const Tensor& t = node(v.id).value;
        PRISM_CHECK(t.rank() == 3 && t.height() == h && t.width() == w,
                    "concat_channels: spatial dims differ");
        total_c += t.channels();
        need = need || node(v.id).requires_grad;
    }
    Tensor out({total_c, h, w});
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    std::int64_t offset = 0;
    for (Var v : parts) {
        const Tensor& t = node(v.id).value;
        for (std::int64_t i = 0; i < t.numel(); ++i) out[offset + i] = t[i];
        offset += t.numel();
    }
    std::vector<int> ids;
    for (Var v : parts) ids.push_back(v.id);
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ids, hw] {
            (void)hw;
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            std::int64_t offset = 0;
            for (int pid : ids) {
                const std::int64_t sz = nodes_[static_cast<size_t>(pid)].value.numel();
                if (nodes_[static_cast<size_t>(pid)].requires_grad) {
                    Tensor& gp = grad_buffer(pid);
                    for (std::int64_t i = 0; i < sz; ++i) gp[i] += go[offset + i];
                }
                offset += sz;
            }
        };
    }
    return {this, id};
}

Var Graph::slice_channels(Var a, int start, int count) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    PRISM_CHECK(x.rank() == 3, "slice_channels expects (C,H,W)");
    PRISM_CHECK(start >= 0 && count > 0 && start + count <= x.channels(),
                "slice_channels out of range");
    const int h = x.height(), w = x.width();
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out({count, h, w});
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = x[start * hw + i];
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, start, hw] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < go.numel(); ++i) ga[start * hw + i] += go[i];
        };
    }
    return {this, id};
}

// ---------------------------------------------------------------------------
// spatial ops

Var Graph::grad_x(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    PRISM_CHECK(x.rank() == 3 && x.width() >= 2, "grad_x expects (C,H,W>=2)");
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out({c, h, w - 1});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int j = 0; j < w - 1; ++j)
                out.at(ch, y, j) = x.at(ch, y, j + 1) - x.at(ch, y, j);
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, c, h, w] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int j = 0; j < w - 1; ++j) {
                        const double g = go.at(ch, y, j);
                        ga.at(ch, y, j + 1) += g;
                        ga.at(ch, y, j) -= g;
                    }
        };
    }
    return {this, id};
}

Var Graph::grad_y(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    PRISM_CHECK(x.rank() == 3 && x.height() >= 2, "grad_y expects (C,H>=2,W)");
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out({c, h - 1, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h - 1; ++y)
            for (int j = 0; j < w; ++j)
                out.at(ch, y, j) = x.at(ch, y + 1, j) - x.at(ch, y, j);
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, c, h, w] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h - 1; ++y)
                    for (int j = 0; j < w; ++j) {
                        const double g = go.at(ch, y, j);
                        ga.at(ch, y + 1, j) += g;
                        ga.at(ch, y, j) -= g;
                    }
        };
    }
    return {this, id};
}

namespace {

// im2col for zero-padded convolution; col is (Cin*K*K, OH*OW) row-major.
void im2col(const Tensor& x, int k, int stride, int pad, int oh, int ow, RowMat& col) {
    const int cin = x.channels(), h = x.height(), w = x.width();
    col.resize(static_cast<Eigen::Index>(cin) * k * k, static_cast<Eigen::Index>(oh) * ow);
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
                double* dst = col.data() + row * col.cols();
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy * stride - pad + ky;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int xx = ox * stride - pad + kx;
                        dst[oy * ow + ox] =
                            (y >= 0 && y < h && xx >= 0 && xx < w) ? x.at(ci, y, xx) : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const RowMat& dcol, int cin, int h, int w, int k, int stride, int pad, int oh,
            int ow, Tensor& dx) {
    for (int ci = 0; ci < cin; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
                const double* src = dcol.data() + row * dcol.cols();
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy * stride - pad + ky;
                    if (y < 0 || y >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int xx = ox * stride - pad + kx;
                        if (xx < 0 || xx >= w) continue;
                        dx.at(ci, y, xx) += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

} // namespace

Var Graph::conv2d(Var vx, Var vw, Var vb, int stride, int pad) {
    check_owned(vx);
    check_owned(vw);
    check_owned(vb);
    const Tensor& x = node(vx.id).value;
    const Tensor& w = node(vw.id).value;
    const Tensor& b = node(vb.id).value;
    PRISM_CHECK(x.rank() == 3 && w.rank() == 4, "conv2d expects (C,H,W) input, (O,C,K,K) weight");
    PRISM_CHECK(w.dim(1) == x.channels(),
                "conv2d channel mismatch: input has " << x.channels() << ", weight expects "
                                                      << w.dim(1));
    PRISM_CHECK(w.dim(2) == w.dim(3), "conv2d kernel must be square");
    PRISM_CHECK(b.numel() == w.dim(0), "conv2d bias size mismatch");
    PRISM_CHECK(stride >= 1 && pad >= 0, "invalid conv2d stride/pad");
    const int cout = w.dim(0), cin = x.channels(), k = w.dim(2);
    const int h = x.height(), wid = x.width();
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (wid + 2 * pad - k) / stride + 1;
    PRISM_CHECK(oh >= 1 && ow >= 1, "conv2d output would be empty");

    auto col = std::make_shared<RowMat>();
    im2col(x, k, stride, pad, oh, ow, *col);
    Eigen::Map<const RowMat> wmat(w.data(), cout, static_cast<Eigen::Index>(cin) * k * k);
    Tensor out({cout, oh, ow});
    Eigen::Map<RowMat> omat(out.data(), cout, static_cast<Eigen::Index>(oh) * ow);
    omat.noalias() = wmat * (*col);
    for (int co = 0; co < cout; ++co) omat.row(co).array() += b[co];

    const bool need = node(vx.id).requires_grad || node(vw.id).requires_grad ||
                      node(vb.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        // col is only consumed by the dW branch; drop it when weights are frozen.
        if (!node(vw.id).requires_grad) col.reset();
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ix = vx.id, iw = vw.id, ib = vb.id,
                                                    col, stride, pad, k, cout, cin, h, wid, oh,
                                                    ow] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Eigen::Map<const RowMat> gmat(go.data(), cout, static_cast<Eigen::Index>(oh) * ow);
            if (nodes_[static_cast<size_t>(ib)].requires_grad) {
                Tensor& gb = grad_buffer(ib);
                for (int co = 0; co < cout; ++co) gb[co] += gmat.row(co).sum();
            }
            if (nodes_[static_cast<size_t>(iw)].requires_grad) {
                Tensor& gw = grad_buffer(iw);
                Eigen::Map<RowMat> gwmat(gw.data(), cout, static_cast<Eigen::Index>(cin) * k * k);
                gwmat.noalias() += gmat * col->transpose();
            }
            if (nodes_[static_cast<size_t>(ix)].requires_grad) {
                const Tensor& w = nodes_[static_cast<size_t>(iw)].value;
                Eigen::Map<const RowMat> wmat(w.data(), cout,
                                              static_cast<Eigen::Index>(cin) * k * k);
                RowMat dcol = wmat.transpose() * gmat;
                Tensor& gx = grad_buffer(ix);
                col2im(dcol, cin, h, wid, k, stride, pad, oh, ow, gx);
            }
        };
    }
    return {this, id};
}

namespace {
inline int reflect_index(int i, int n) {
    // PyTorch-style reflection without edge repeat: -1 -> 1, n -> n-2.
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

// Normalized [-1,1] -> pixel coordinate (align-corners), border-clamped.
// Near-integer results are snapped so that an identity warp reproduces the
// source bit-exactly despite the normalize/denormalize round trip.
inline double denorm_coord(double g, int n) {
    double p = (g + 1.0) * 0.5 * (n - 1);
    if (std::fabs(p - std::nearbyint(p)) < 1e-8) p = std::nearbyint(p);
    return std::clamp(p, 0.0, static_cast<double>(n - 1));
}
} // namespace

Var Graph::box_filter3(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    PRISM_CHECK(x.rank() == 3 && x.height() >= 2 && x.width() >= 2,
                "box_filter3 expects (C,H>=2,W>=2)");
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        acc += x.at(ch, reflect_index(y + dy, h), reflect_index(xx + dx, w));
                out.at(ch, y, xx) = acc / 9.0;
            }
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, c, h, w] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        const double g = go.at(ch, y, xx) / 9.0;
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx)
                                ga.at(ch, reflect_index(y + dy, h), reflect_index(xx + dx, w)) += g;
                    }
        };
    }
    return {this, id};
}

Var Graph::upsample_nearest2x(Var a) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    PRISM_CHECK(x.rank() == 3, "upsample_nearest2x expects (C,H,W)");
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx) out.at(ch, y, xx) = x.at(ch, y / 2, xx / 2);
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, c, h, w] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx)
                        ga.at(ch, y / 2, xx / 2) += go.at(ch, y, xx);
        };
    }
    return {this, id};
}

Var Graph::upsample_bilinear(Var a, int out_h, int out_w) {
    check_owned(a);
    const Tensor& x = node(a.id).value;
    PRISM_CHECK(x.rank() == 3, "upsample_bilinear expects (C,H,W)");
    const int c = x.channels(), h = x.height(), w = x.width();
    Tensor out = resize_bilinear(x, out_h, out_w);
    const bool need = node(a.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need && (out_h != h || out_w != w)) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id, c, h, w, out_h, out_w] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            const double sy = static_cast<double>(h) / out_h;
            const double sx = static_cast<double>(w) / out_w;
            for (int y = 0; y < out_h; ++y) {
                double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
                const int y0 = static_cast<int>(std::floor(fy));
                const int y1 = std::min(y0 + 1, h - 1);
                const double wy = fy - y0;
                for (int xx = 0; xx < out_w; ++xx) {
                    double fx = std::clamp((xx + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
                    const int x0 = static_cast<int>(std::floor(fx));
                    const int x1 = std::min(x0 + 1, w - 1);
                    const double wx = fx - x0;
                    for (int ch = 0; ch < c; ++ch) {
                        const double g = go.at(ch, y, xx);
                        ga.at(ch, y0, x0) += g * (1 - wy) * (1 - wx);
                        ga.at(ch, y0, x1) += g * (1 - wy) * wx;
                        ga.at(ch, y1, x0) += g * wy * (1 - wx);
                        ga.at(ch, y1, x1) += g * wy * wx;
                    }
                }
            }
        };
    } else if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ia = a.id] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            Tensor& ga = grad_buffer(ia);
            for (std::int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
        };
    }
    return {this, id};
}

Var Graph::grid_sample_border(Var vin, Var vgrid) {
    check_owned(vin);
    check_owned(vgrid);
    const Tensor& x = node(vin.id).value;
    const Tensor& grid = node(vgrid.id).value;
    PRISM_CHECK(x.rank() == 3 && x.height() >= 2 && x.width() >= 2,
                "grid_sample expects (C,H>=2,W>=2) input");
    PRISM_CHECK(grid.rank() == 3 && grid.channels() == 2, "grid must be (2,H,W)");
    const int c = x.channels(), h = x.height(), w = x.width();
    const int gh = grid.height(), gw = grid.width();
    Tensor out({c, gh, gw});
    for (int y = 0; y < gh; ++y) {
        for (int xx = 0; xx < gw; ++xx) {
            const double px = denorm_coord(grid.at(0, y, xx), w);
            const double py = denorm_coord(grid.at(1, y, xx), h);
            const int x0 = static_cast<int>(std::floor(px));
            const int y0 = static_cast<int>(std::floor(py));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double wx = px - x0, wy = py - y0;
            for (int ch = 0; ch < c; ++ch) {
                out.at(ch, y, xx) = (1 - wy) * ((1 - wx) * x.at(ch, y0, x0) + wx * x.at(ch, y0, x1)) +
                                    wy * ((1 - wx) * x.at(ch, y1, x0) + wx * x.at(ch, y1, x1));
            }
        }
    }
    const bool need = node(vin.id).requires_grad || node(vgrid.id).requires_grad;
    const int id = push(std::move(out), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, ix = vin.id, ig = vgrid.id, c, h, w,
                                                    gh, gw] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const Tensor& x = nodes_[static_cast<size_t>(ix)].value;
            const Tensor& grid = nodes_[static_cast<size_t>(ig)].value;
            const bool nx = nodes_[static_cast<size_t>(ix)].requires_grad;
            const bool ng = nodes_[static_cast<size_t>(ig)].requires_grad;
            Tensor* gx = nx ? &grad_buffer(ix) : nullptr;
            Tensor* gg = ng ? &grad_buffer(ig) : nullptr;
            for (int y = 0; y < gh; ++y) {
                for (int xx = 0; xx < gw; ++xx) {
                    const double rx = (grid.at(0, y, xx) + 1.0) * 0.5 * (w - 1);
                    const double ry = (grid.at(1, y, xx) + 1.0) * 0.5 * (h - 1);
                    const double px = denorm_coord(grid.at(0, y, xx), w);
                    const double py = denorm_coord(grid.at(1, y, xx), h);
                    const bool cx = rx < 0.0 || rx > w - 1, cy = ry < 0.0 || ry > h - 1;
                    const int x0 = static_cast<int>(std::floor(px));
                    const int y0 = static_cast<int>(std::floor(py));
                    const int x1 = std::min(x0 + 1, w - 1);
                    const int y1 = std::min(y0 + 1, h - 1);
                    const double wx = px - x0, wy = py - y0;
                    double dpx = 0.0, dpy = 0.0;
                    for (int ch = 0; ch < c; ++ch) {
                        const double g = go.at(ch, y, xx);
                        if (g == 0.0) continue;
                        const double v00 = x.at(ch, y0, x0), v01 = x.at(ch, y0, x1);
                        const double v10 = x.at(ch, y1, x0), v11 = x.at(ch, y1, x1);
                        if (gx) {
                            gx->at(ch, y0, x0) += g * (1 - wy) * (1 - wx);
                            gx->at(ch, y0, x1) += g * (1 - wy) * wx;
                            gx->at(ch, y1, x0) += g * wy * (1 - wx);
                            gx->at(ch, y1, x1) += g * wy * wx;
                        }
                        dpx += g * ((1 - wy) * (v01 - v00) + wy * (v11 - v10));
                        dpy += g * ((1 - wx) * (v10 - v00) + wx * (v11 - v01));
                    }
                    if (gg) {
                        if (!cx) gg->at(0, y, xx) += dpx * 0.5 * (w - 1);
                        if (!cy) gg->at(1, y, xx) += dpy * 0.5 * (h - 1);
                    }
                }
            }
        };
    }
    return {this, id};
}

// ---------------------------------------------------------------------------
// fused warp grid

Graph::WarpGridResult Graph::make_warp_grid(Var vdepth, Var vpose, const CameraIntrinsics& k) {
    check_owned(vdepth);
    check_owned(vpose);
    const Tensor& depth = node(vdepth.id).value;
    const Tensor& pose = node(vpose.id).value;
    PRISM_CHECK(depth.rank() == 3 && depth.channels() == 1, "depth must be (1,H,W)");
    PRISM_CHECK(depth.height() == k.height && depth.width() == k.width,
                "depth dims do not match intrinsics");
    PRISM_CHECK(pose.numel() == 6, "pose must have 6 values (axis-angle, translation)");
    PRISM_CHECK(k.width >= 2 && k.height >= 2, "frame too small to warp");

    constexpr double kZEps = 1e-7;
    constexpr double kSnapTol = 1e-8; // sub-nanopixel snap keeps self-warp exact

    const int h = k.height, w = k.width;
    const Eigen::Vector3d rot(pose[0], pose[1], pose[2]);
    const Eigen::Vector3d trans(pose[3], pose[4], pose[5]);
    const Eigen::Matrix3d rmat = so3_exp(rot);

    Tensor grid({2, h, w});
    Tensor mask({1, h, w});
    // Cache transformed points for the backward pass.
    auto pts = std::make_shared<std::vector<double>>(static_cast<size_t>(h) * w * 3);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double z = depth.at(0, y, x);
            const double px = (x - k.cx) / k.fx * z;
            const double py = (y - k.cy) / k.fy * z;
            const Eigen::Vector3d p = rmat * Eigen::Vector3d(px, py, z) + trans;
            const size_t o = (static_cast<size_t>(y) * w + x) * 3;
            (*pts)[o] = p.x();
            (*pts)[o + 1] = p.y();
            (*pts)[o + 2] = p.z();
            const double zc = std::max(p.z(), kZEps);
            double u = k.fx * p.x() / zc + k.cx;
            double v = k.fy * p.y() / zc + k.cy;
            if (std::fabs(u - std::nearbyint(u)) < kSnapTol) u = std::nearbyint(u);
            if (std::fabs(v - std::nearbyint(v)) < kSnapTol) v = std::nearbyint(v);
            const bool valid = p.z() > kZEps && u >= 0.0 && u <= w - 1 && v >= 0.0 && v <= h - 1;
            grid.at(0, y, x) = 2.0 * u / (w - 1) - 1.0;
            grid.at(1, y, x) = 2.0 * v / (h - 1) - 1.0;
            mask.at(0, y, x) = valid ? 1.0 : 0.0;
        }
    }

    const bool need = node(vdepth.id).requires_grad || node(vpose.id).requires_grad;
    const int id = push(std::move(grid), need);
    if (need) {
        nodes_[static_cast<size_t>(id)].backprop = [this, id, idep = vdepth.id, ipose = vpose.id,
                                                    pts, rmat, rot, k, h, w] {
            const Tensor& go = nodes_[static_cast<size_t>(id)].grad;
            const bool ndep = nodes_[static_cast<size_t>(idep)].requires_grad;
            const bool npose = nodes_[static_cast<size_t>(ipose)].requires_grad;
            Tensor* gdep = ndep ? &grad_buffer(idep) : nullptr;
            Tensor* gpose = npose ? &grad_buffer(ipose) : nullptr;
            const Eigen::Matrix3d rt = rmat.transpose();
            Eigen::Vector3d dtrans = Eigen::Vector3d::Zero();
            Eigen::Vector3d cross_acc = Eigen::Vector3d::Zero();
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const double gu = go.at(0, y, x) * 2.0 / (w - 1);
                    const double gv = go.at(1, y, x) * 2.0 / (h - 1);
                    if (gu == 0.0 && gv == 0.0) continue;
                    const size_t o = (static_cast<size_t>(y) * w + x) * 3;
                    const double pxv = (*pts)[o], pyv = (*pts)[o + 1], pzv = (*pts)[o + 2];
                    const double zc = std::max(pzv, 1e-7);
                    // d(u,v)/dP'
                    Eigen::Vector3d dp(gu * k.fx / zc, gv * k.fy / zc, 0.0);
                    if (pzv > 1e-7)
                        dp.z() = -(gu * k.fx * pxv + gv * k.fy * pyv) / (zc * zc);
                    if (gpose || gdep) {
                        const Eigen::Vector3d wvec = rt * dp;
                        if (gpose) {
                            dtrans += dp;
                            const double z = nodes_[static_cast<size_t>(idep)]
                                                 .value.at(0, y, x);
                            const Eigen::Vector3d pcam((x - k.cx) / k.fx * z,
                                                       (y - k.cy) / k.fy * z, z);
                            cross_acc += pcam.cross(wvec);
                        }
                        if (gdep) {
                            gdep->at(0, y, x) += wvec.x() * (x - k.cx) / k.fx +
                                                 wvec.y() * (y - k.cy) / k.fy + wvec.z();
                        }
                    }
                }
            }
            if (gpose) {
                const Eigen::Vector3d drot = so3_right_jacobian(rot).transpose() * cross_acc;
                for (int i = 0; i < 3; ++i) {
                    (*gpose)[i] += drot[i];
                    (*gpose)[i + 3] += dtrans[i];
                }
            }
        };
    }
    return {Var{this, id}, std::move(mask)};
}

} // namespace prism
