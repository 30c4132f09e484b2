#include "gate/amalgam/autodiff.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gate::amalgam {

namespace {

int64_t shape_numel(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

}  // namespace

Value::Value(std::vector<int64_t> s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), 0.0) {}

Value::Value(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("value data does not match shape");
    }
}

int Tape::push(Value val, std::vector<int> parents, std::function<void(Tape&, int)> backprop) {
    Node n;
    n.requires_grad = any_requires_grad(parents);
    n.val = std::move(val);
    n.parents = std::move(parents);
    if (n.requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

bool Tape::any_requires_grad(const std::vector<int>& parents) const {
    for (int p : parents) {
        if (nodes_[static_cast<size_t>(p)].requires_grad) return true;
    }
    return false;
}

int Tape::constant(Value v) { return push(std::move(v), {}, nullptr); }

int Tape::leaf(Value v) {
    Node n;
    n.requires_grad = true;
    n.val = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

double Tape::scalar(int node) const {
    const Value& v = nodes_[static_cast<size_t>(node)].val;
    if (v.numel() != 1) throw std::logic_error("node is not a scalar");
    return v.data[0];
}

int Tape::add(int a, int b) {
    const Value& va = value(a);
    const Value& vb = value(b);
    if (va.shape != vb.shape) throw std::invalid_argument("add: shape mismatch");
    Value out = va;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Value& g = t.grad(self);
        if (t.requires_grad(a)) {
            Value& ga = t.mutable_grad(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Value& gb = t.mutable_grad(b);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
    });
}

int Tape::sub(int a, int b) {
    const Value& va = value(a);
    const Value& vb = value(b);
    if (va.shape != vb.shape) throw std::invalid_argument("sub: shape mismatch");
    Value out = va;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, int self) {
        const Value& g = t.grad(self);
        if (t.requires_grad(a)) {
            Value& ga = t.mutable_grad(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Value& gb = t.mutable_grad(b);
            for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

int Tape::scale(int a, double s) {
    Value out = value(a);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return push(std::move(out), {a}, [a, s](Tape& t, int self) {
        const Value& g = t.grad(self);
        Value& ga = t.mutable_grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += s * g[i];
    });
}

int Tape::matmul(int a, int b) {
    const Value& va = value(a);
    const Value& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
        throw std::invalid_argument("matmul: bad shapes");
    }
    const int64_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Value out({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = va.at(i, kk);
            if (av == 0.0) continue;
            for (int64_t j = 0; j < n; ++j) out.at(i, j) += av * vb.at(kk, j);
        }
    return push(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, int self) {
        const Value& g = t.grad(self);
        const Value& va = t.value(a);
        const Value& vb = t.value(b);
        if (t.requires_grad(a)) {
            Value& ga = t.mutable_grad(a);  // g @ b^T
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) {
                    const double gv = g.at(i, j);
                    if (gv == 0.0) continue;
                    for (int64_t kk = 0; kk < k; ++kk) ga.at(i, kk) += gv * vb.at(kk, j);
                }
        }
        if (t.requires_grad(b)) {
            Value& gb = t.mutable_grad(b);  // a^T @ g
            for (int64_t i = 0; i < m; ++i)
                for (int64_t kk = 0; kk < k; ++kk) {
                    const double av = va.at(i, kk);
                    if (av == 0.0) continue;
                    for (int64_t j = 0; j < n; ++j) gb.at(kk, j) += av * g.at(i, j);
                }
        }
    });
}

int Tape::transpose(int a) {
    const Value& va = value(a);
    if (va.rank() != 2) throw std::invalid_argument("transpose: 2-D only");
    const int64_t m = va.dim(0), n = va.dim(1);
    Value out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(j, i) = va.at(i, j);
    return push(std::move(out), {a}, [a, m, n](Tape& t, int self) {
        const Value& g = t.grad(self);
        Value& ga = t.mutable_grad(a);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
    });
}

int Tape::add_rowvec(int a, int row) {
    const Value& va = value(a);
    const Value& vr = value(row);
    if (va.rank() != 2 || vr.rank() != 2 || vr.dim(0) != 1 || vr.dim(1) != va.dim(1)) {
        throw std::invalid_argument("add_rowvec: bad shapes");
    }
    Value out = va;
    for (int64_t i = 0; i < va.dim(0); ++i)
        for (int64_t j = 0; j < va.dim(1); ++j) out.at(i, j) += vr.at(0, j);
    return push(std::move(out), {a, row}, [a, row](Tape& t, int self) {
        const Value& g = t.grad(self);
        if (t.requires_grad(a)) {
            Value& ga = t.mutable_grad(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(row)) {
            Value& gr = t.mutable_grad(row);
            for (int64_t i = 0; i < g.dim(0); ++i)
                for (int64_t j = 0; j < g.dim(1); ++j) gr.at(0, j) += g.at(i, j);
        }
    });
}

int Tape::add_colvec(int a, int col) {
    const Value& va = value(a);
    const Value& vc = value(col);
    if (va.rank() != 2 || vc.rank() != 2 || vc.dim(0) != 1 || vc.dim(1) != va.dim(0)) {
        throw std::invalid_argument("add_colvec: bad shapes");
    }
    Value out = va;
    for (int64_t i = 0; i < va.dim(0); ++i)
        for (int64_t j = 0; j < va.dim(1); ++j) out.at(i, j) += vc.at(0, i);
    return push(std::move(out), {a, col}, [a, col](Tape& t, int self) {
        const Value& g = t.grad(self);
        if (t.requires_grad(a)) {
            Value& ga = t.mutable_grad(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(col)) {
            Value& gc = t.mutable_grad(col);
            for (int64_t i = 0; i < g.dim(0); ++i)
                for (int64_t j = 0; j < g.dim(1); ++j) gc.at(0, i) += g.at(i, j);
        }
    });
}

int Tape::relu(int a) {
    Value out = value(a);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, out[i]);
    return push(std::move(out), {a}, [a](Tape& t, int self) {
        const Value& g = t.grad(self);
        const Value& va = t.value(a);
        Value& ga = t.mutable_grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) {
            if (va[i] > 0.0) ga[i] += g[i];
        }
    });
}

int Tape::softmax_row(int a) {
    const Value& va = value(a);
    if (va.rank() != 2 || va.dim(0) != 1) throw std::invalid_argument("softmax_row expects (1, n)");
    const int64_t n = va.dim(1);
    Value out({1, n});
    double mx = va[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, va[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        out[i] = std::exp(va[i] - mx);
        sum += out[i];
    }
    for (int64_t i = 0; i < n; ++i) out[i] /= sum;
    return push(std::move(out), {a}, [a, n](Tape& t, int self) {
        const Value& g = t.grad(self);
        const Value& p = t.value(self);
        Value& ga = t.mutable_grad(a);
        double dot = 0.0;
        for (int64_t i = 0; i < n; ++i) dot += g[i] * p[i];
        for (int64_t i = 0; i < n; ++i) ga[i] += p[i] * (g[i] - dot);
    });
}

int Tape::reshape(int a, std::vector<int64_t> shape) {
    const Value& va = value(a);
    if (shape_numel(shape) != va.numel()) throw std::invalid_argument("reshape: element count mismatch");
    Value out(std::move(shape), va.data);
    return push(std::move(out), {a}, [a](Tape& t, int self) {
        const Value& g = t.grad(self);
        Value& ga = t.mutable_grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
}

int Tape::concat_rows(int a, int b) {
    const Value& va = value(a);
    const Value& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(1)) {
        throw std::invalid_argument("concat_rows: column counts differ");
    }
    Value out({va.dim(0) + vb.dim(0), va.dim(1)});
    std::copy(va.data.begin(), va.data.end(), out.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + va.numel());
    const int64_t na = va.numel();
    return push(std::move(out), {a, b}, [a, b, na](Tape& t, int self) {
        const Value& g = t.grad(self);
        if (t.requires_grad(a)) {
            Value& ga = t.mutable_grad(a);
            for (int64_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (t.requires_grad(b)) {
            Value& gb = t.mutable_grad(b);
            for (int64_t i = na; i < g.numel(); ++i) gb[i - na] += g[i];
        }
    });
}

int Tape::slice_rows(int a, int64_t start, int64_t count) {
    const Value& va = value(a);
    if (va.rank() != 2 || start < 0 || count < 1 || start + count > va.dim(0)) {
        throw std::invalid_argument("slice_rows: range outside matrix");
    }
    const int64_t n = va.dim(1);
    Value out({count, n});
    std::copy(va.data.begin() + start * n, va.data.begin() + (start + count) * n, out.data.begin());
    return push(std::move(out), {a}, [a, start, n](Tape& t, int self) {
        const Value& g = t.grad(self);
        Value& ga = t.mutable_grad(a);
        for (int64_t i = 0; i < g.numel(); ++i) ga[start * n + i] += g[i];
    });
}

int Tape::global_avg_pool(int a) {
    const Value& va = value(a);
    if (va.rank() != 3) throw std::invalid_argument("global_avg_pool expects (c, h, w)");
    const int64_t c = va.dim(0), hw = va.dim(1) * va.dim(2);
    Value out({1, c});
    for (int64_t ci = 0; ci < c; ++ci) {
        double s = 0.0;
        for (int64_t i = 0; i < hw; ++i) s += va[ci * hw + i];
        out[ci] = s / static_cast<double>(hw);
    }
    return push(std::move(out), {a}, [a, c, hw](Tape& t, int self) {
        const Value& g = t.grad(self);
        Value& ga = t.mutable_grad(a);
        for (int64_t ci = 0; ci < c; ++ci) {
            const double gv = g[ci] / static_cast<double>(hw);
            for (int64_t i = 0; i < hw; ++i) ga[ci * hw + i] += gv;
        }
    });
}

int Tape::normalize_rows(int a, double eps) {
    const Value& va = value(a);
    if (va.rank() != 2) throw std::invalid_argument("normalize_rows: 2-D only");
    const int64_t m = va.dim(0), n = va.dim(1);
    Value out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        double sq = 0.0;
        for (int64_t j = 0; j < n; ++j) sq += va.at(i, j) * va.at(i, j);
        const double norm = std::sqrt(sq) + eps;
        for (int64_t j = 0; j < n; ++j) out.at(i, j) = va.at(i, j) / norm;
    }
    return push(std::move(out), {a}, [a, m, n, eps](Tape& t, int self) {
        const Value& g = t.grad(self);
        const Value& va = t.value(a);
        Value& ga = t.mutable_grad(a);
        for (int64_t i = 0; i < m; ++i) {
            double sq = 0.0, dot = 0.0;
            for (int64_t j = 0; j < n; ++j) sq += va.at(i, j) * va.at(i, j);
            const double norm = std::sqrt(sq) + eps;
            for (int64_t j = 0; j < n; ++j) dot += g.at(i, j) * va.at(i, j);
            for (int64_t j = 0; j < n; ++j) {
                ga.at(i, j) += g.at(i, j) / norm - va.at(i, j) * dot / (norm * norm * norm);
            }
        }
    });
}

int Tape::row_l2norm_sum(int a) {
    const Value& va = value(a);
    if (va.rank() != 2) throw std::invalid_argument("row_l2norm_sum: 2-D only");
    const int64_t m = va.dim(0), n = va.dim(1);
    double total = 0.0;
    for (int64_t i = 0; i < m; ++i) {
        double sq = 0.0;
        for (int64_t j = 0; j < n; ++j) sq += va.at(i, j) * va.at(i, j);
        total += std::sqrt(sq);
    }
    Value out({1, 1});
    out[0] = total;
    return push(std::move(out), {a}, [a, m, n](Tape& t, int self) {
        const double g = t.grad(self)[0];
        const Value& va = t.value(a);
        Value& ga = t.mutable_grad(a);
        for (int64_t i = 0; i < m; ++i) {
            double sq = 0.0;
            for (int64_t j = 0; j < n; ++j) sq += va.at(i, j) * va.at(i, j);
            const double norm = std::sqrt(sq);
            if (norm <= 1e-16) continue;  // subgradient 0 at the origin
            for (int64_t j = 0; j < n; ++j) ga.at(i, j) += g * va.at(i, j) / norm;
        }
    });
}

int Tape::pairwise_row_distance_sum(int a) {
    const Value& va = value(a);
    if (va.rank() != 2) throw std::invalid_argument("pairwise_row_distance_sum: 2-D only");
    const int64_t m = va.dim(0), n = va.dim(1);
    double total = 0.0;
    for (int64_t j = 0; j < m; ++j)
        for (int64_t k = 0; k < m; ++k) {
            if (j == k) continue;
            double sq = 0.0;
            for (int64_t d = 0; d < n; ++d) {
                const double diff = va.at(j, d) - va.at(k, d);
                sq += diff * diff;
            }
            total += std::sqrt(sq);
        }
    Value out({1, 1});
    out[0] = total;
    return push(std::move(out), {a}, [a, m, n](Tape& t, int self) {
        const double g = t.grad(self)[0];
        const Value& va = t.value(a);
        Value& ga = t.mutable_grad(a);
        for (int64_t j = 0; j < m; ++j)
            for (int64_t k = 0; k < m; ++k) {
                if (j == k) continue;
                double sq = 0.0;
                for (int64_t d = 0; d < n; ++d) {
                    const double diff = va.at(j, d) - va.at(k, d);
                    sq += diff * diff;
                }
                const double norm = std::sqrt(sq);
                if (norm <= 1e-16) continue;  // subgradient 0 where rows coincide
                for (int64_t d = 0; d < n; ++d) {
                    ga.at(j, d) += g * (va.at(j, d) - va.at(k, d)) / norm;
                }
            }
    });
}

int Tape::cross_entropy_mean(int logits, const std::vector<int>& labels, int ignore_label) {
    const Value& v = value(logits);
    if (v.rank() != 2) throw std::invalid_argument("cross_entropy_mean: logits must be (classes, n)");
    const int64_t classes = v.dim(0), n = v.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw std::invalid_argument("cross_entropy_mean: label count mismatch");
    }
    int64_t counted = 0;
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y == ignore_label) continue;
        if (y < 0 || y >= classes) {
            throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(classes) + ")");
        }
        double mx = v.at(0, i);
        for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, v.at(c, i));
        double sum = 0.0;
        for (int64_t c = 0; c < classes; ++c) sum += std::exp(v.at(c, i) - mx);
        loss += std::log(sum) - (v.at(y, i) - mx);
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("cross_entropy_mean: all pixels ignored");
    Value out({1, 1});
    out[0] = loss / static_cast<double>(counted);
    return push(std::move(out), {logits},
                [logits, labels, ignore_label, classes, n, counted](Tape& t, int self) {
                    const double g = t.grad(self)[0] / static_cast<double>(counted);
                    const Value& v = t.value(logits);
                    Value& gl = t.mutable_grad(logits);
                    for (int64_t i = 0; i < n; ++i) {
                        const int y = labels[static_cast<size_t>(i)];
                        if (y == ignore_label) continue;
                        double mx = v.at(0, i);
                        for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, v.at(c, i));
                        double sum = 0.0;
                        for (int64_t c = 0; c < classes; ++c) sum += std::exp(v.at(c, i) - mx);
                        for (int64_t c = 0; c < classes; ++c) {
                            const double p = std::exp(v.at(c, i) - mx) / sum;
                            gl.at(c, i) += g * (p - (c == y ? 1.0 : 0.0));
                        }
                    }
                });
}

int Tape::conv3x3(int x, int kernel, int bias) {
    const Value& vx = value(x);
    const Value& vk = value(kernel);
    const Value& vb = value(bias);
    if (vx.rank() != 3 || vk.rank() != 4 || vk.dim(2) != 3 || vk.dim(3) != 3 || vk.dim(1) != vx.dim(0)) {
        throw std::invalid_argument("conv3x3: bad shapes");
    }
    const int64_t ci = vx.dim(0), h = vx.dim(1), w = vx.dim(2), co = vk.dim(0);
    if (vb.numel() != co) throw std::invalid_argument("conv3x3: bias size mismatch");
    Value out({co, h, w});
    auto x_at = [&](int64_t c, int64_t y, int64_t xx) -> double {
        if (y < 0 || y >= h || xx < 0 || xx >= w) return 0.0;
        return vx[(c * h + y) * w + xx];
    };
    for (int64_t o = 0; o < co; ++o) {
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                double s = vb[o];
                for (int64_t c = 0; c < ci; ++c)
                    for (int64_t ky = 0; ky < 3; ++ky)
                        for (int64_t kx = 0; kx < 3; ++kx) {
                            s += vk[((o * ci + c) * 3 + ky) * 3 + kx] * x_at(c, y + ky - 1, xx + kx - 1);
                        }
                out[(o * h + y) * w + xx] = s;
            }
    }
    return push(std::move(out), {x, kernel, bias}, [x, kernel, bias, ci, h, w, co](Tape& t, int self) {
        const Value& g = t.grad(self);
        const Value& vx = t.value(x);
        const Value& vk = t.value(kernel);
        const bool need_x = t.requires_grad(x);
        const bool need_k = t.requires_grad(kernel);
        const bool need_b = t.requires_grad(bias);
        Value* gx = need_x ? &t.mutable_grad(x) : nullptr;
        Value* gk = need_k ? &t.mutable_grad(kernel) : nullptr;
        Value* gb = need_b ? &t.mutable_grad(bias) : nullptr;
        for (int64_t o = 0; o < co; ++o) {
            for (int64_t y = 0; y < h; ++y)
                for (int64_t xx = 0; xx < w; ++xx) {
                    const double gv = g[(o * h + y) * w + xx];
                    if (gv == 0.0) continue;
                    if (gb) (*gb)[o] += gv;
                    for (int64_t c = 0; c < ci; ++c)
                        for (int64_t ky = 0; ky < 3; ++ky)
                            for (int64_t kx = 0; kx < 3; ++kx) {
                                const int64_t iy = y + ky - 1, ix = xx + kx - 1;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                const int64_t xi = (c * h + iy) * w + ix;
                                const int64_t ki = ((o * ci + c) * 3 + ky) * 3 + kx;
                                if (gk) (*gk)[ki] += gv * vx[xi];
                                if (gx) (*gx)[xi] += gv * vk[ki];
                            }
                }
        }
    });
}

int Tape::bilinear_sample(int x, const std::vector<std::pair<double, double>>& points) {
    const Value& vx = value(x);
    if (vx.rank() != 3) throw std::invalid_argument("bilinear_sample expects (c, h, w)");
    const int64_t c = vx.dim(0), h = vx.dim(1), w = vx.dim(2);
    const int64_t k = static_cast<int64_t>(points.size());
    Value out({k, c});
    struct Corner {
        int64_t idx;
        double weight;
    };
    std::vector<std::array<Corner, 4>> corners(points.size());
    for (size_t p = 0; p < points.size(); ++p) {
        const double y = std::clamp(points[p].first, 0.0, static_cast<double>(h - 1));
        const double xx = std::clamp(points[p].second, 0.0, static_cast<double>(w - 1));
        const int64_t y0 = static_cast<int64_t>(std::floor(y));
        const int64_t x0 = static_cast<int64_t>(std::floor(xx));
        const int64_t y1 = std::min(y0 + 1, h - 1);
        const int64_t x1 = std::min(x0 + 1, w - 1);
        const double fy = y - y0, fx = xx - x0;
        corners[p] = {{{y0 * w + x0, (1 - fy) * (1 - fx)},
                       {y0 * w + x1, (1 - fy) * fx},
                       {y1 * w + x0, fy * (1 - fx)},
                       {y1 * w + x1, fy * fx}}};
        for (int64_t ci = 0; ci < c; ++ci) {
            double s = 0.0;
            for (const Corner& cr : corners[p]) s += cr.weight * vx[ci * h * w + cr.idx];
            out.at(static_cast<int64_t>(p), ci) = s;
        }
    }
    return push(std::move(out), {x}, [x, corners, c, h, w](Tape& t, int self) {
        const Value& g = t.grad(self);
        Value& gx = t.mutable_grad(x);
        for (size_t p = 0; p < corners.size(); ++p) {
            for (int64_t ci = 0; ci < c; ++ci) {
                const double gv = g.at(static_cast<int64_t>(p), ci);
                if (gv == 0.0) continue;
                for (const auto& cr : corners[p]) gx[ci * h * w + cr.idx] += gv * cr.weight;
            }
        }
    });
}

void Tape::backward(int loss_node) {
    Node& loss = nodes_[static_cast<size_t>(loss_node)];
    if (loss.val.numel() != 1) throw std::logic_error("backward: loss must be scalar");
    for (Node& n : nodes_) {
        if (n.requires_grad) {
            n.grad = Value(n.val.shape);
        }
    }
    loss.grad[0] = 1.0;
    for (int i = loss_node; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.requires_grad && n.backprop) n.backprop(*this, i);
    }
}

}  // namespace gate::amalgam
