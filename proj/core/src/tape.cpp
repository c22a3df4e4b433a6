#include "histplan/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace histplan {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_finite(const char* op, const std::vector<double>& data) {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + " produced a non-finite value");
        }
    }
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tp = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->attached()) continue;
        if (tp && tp != t->tape()) {
            throw ShapeError("operands belong to different gradient tapes");
        }
        tp = t->tape();
    }
    return tp;
}

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() > 2) {
        throw ShapeError(std::string(op) + " expects rank <= 2, got " + shape_str(t.shape()));
    }
}

}  // namespace

int Tape::watch(Tensor& t) {
    Node node;
    node.numel = t.numel();
    nodes_.push_back(std::move(node));
    const int id = static_cast<int>(nodes_.size()) - 1;
    t.attach(this, id);
    return id;
}

int Tape::emit(std::int64_t numel, BackFn fn) {
    Node node;
    node.numel = numel;
    node.fn = std::move(fn);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node, const double* g, std::int64_t n) {
    if (node < 0) return;
    Node& target = nodes_[static_cast<std::size_t>(node)];
    if (target.numel != n) {
        throw ShapeError("gradient size " + std::to_string(n) + " does not match node size " +
                         std::to_string(target.numel));
    }
    if (target.grad.empty()) {
        target.grad.assign(static_cast<std::size_t>(n), 0.0);
    }
    for (std::int64_t i = 0; i < n; ++i) {
        target.grad[static_cast<std::size_t>(i)] += g[i];
    }
}

void Tape::backward(const Tensor& loss) {
    if (loss.tape() != this || loss.node() < 0) {
        throw ShapeError("backward: loss is not attached to this tape");
    }
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    if (backward_done_) {
        throw ShapeError("backward: tape already consumed; rebuild the graph per pass");
    }
    backward_done_ = true;
    const double one = 1.0;
    accumulate(loss.node(), &one, 1);
    for (int id = loss.node(); id >= 0; --id) {
        Node& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.grad.empty() && node.fn) {
            node.fn(*this, node.grad);
        }
    }
}

std::vector<double> Tape::grad_of(const Tensor& t) const {
    if (t.tape() != this || t.node() < 0) {
        throw ShapeError("grad_of: tensor is not attached to this tape");
    }
    const Node& node = nodes_[static_cast<std::size_t>(t.node())];
    if (node.grad.empty()) {
        return std::vector<double>(static_cast<std::size_t>(node.numel), 0.0);
    }
    return node.grad;
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::int64_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    const double* __restrict__ ap = a.data().data();
    const double* __restrict__ bp = b.data().data();
    double* __restrict__ op = out.data();
    for (std::int64_t i = 0; i < m; ++i) {
        double* __restrict__ orow = op + i * n;
        const double* arow = ap + i * k;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* __restrict__ brow = bp + kk * n;
            for (std::int64_t j = 0; j < n; ++j) {
                orow[j] += av * brow[j];
            }
        }
    }
    check_finite("matmul", out);
    Tensor result({m, n}, std::move(out));
    if (Tape* tp = common_tape({&a, &b})) {
        const int an = a.node(), bn = b.node();
        result.attach(tp, tp->emit(m * n, [an, bn, A = a.data(), B = b.data(), m, k, n](
                                              Tape& t, const std::vector<double>& g) {
            if (an >= 0) {
                // dA = G * B^T, accumulated saxpy-wise over a transposed copy
                // so the inner loop vectorizes.
                std::vector<double> bt(static_cast<std::size_t>(n * k));
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    for (std::int64_t j = 0; j < n; ++j) {
                        bt[static_cast<std::size_t>(j * k + kk)] =
                            B[static_cast<std::size_t>(kk * n + j)];
                    }
                }
                std::vector<double> da(static_cast<std::size_t>(m * k), 0.0);
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* __restrict__ grow = g.data() + i * n;
                    double* __restrict__ drow = da.data() + i * k;
                    for (std::int64_t j = 0; j < n; ++j) {
                        const double gv = grow[j];
                        const double* __restrict__ btrow = bt.data() + j * k;
                        for (std::int64_t kk = 0; kk < k; ++kk) drow[kk] += gv * btrow[kk];
                    }
                }
                t.accumulate(an, da.data(), m * k);
            }
            if (bn >= 0) {
                // dB = A^T * G
                std::vector<double> db(static_cast<std::size_t>(k * n), 0.0);
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* arow = A.data() + i * k;
                    const double* __restrict__ grow = g.data() + i * n;
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const double av = arow[kk];
                        double* __restrict__ drow = db.data() + kk * n;
                        for (std::int64_t j = 0; j < n; ++j) drow[j] += av * grow[j];
                    }
                }
                t.accumulate(bn, db.data(), k * n);
            }
        }));
    }
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool broadcast = !a.same_shape(b);
    if (broadcast) {
        if (!(a.ndim() <= 2 && b.ndim() <= 2 && b.rows() == 1 && a.cols() == b.cols())) {
            throw ShapeError("add: incompatible shapes " + shape_str(a.shape()) + " + " +
                             shape_str(b.shape()));
        }
    }
    const std::int64_t rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.data());
    if (broadcast) {
        for (std::int64_t i = 0; i < rows; ++i) {
            double* orow = out.data() + i * cols;
            for (std::int64_t j = 0; j < cols; ++j) orow[j] += b.at(j);
        }
    } else {
        for (std::int64_t i = 0; i < a.numel(); ++i) out[static_cast<std::size_t>(i)] += b.at(i);
    }
    check_finite("add", out);
    Tensor result(a.shape(), std::move(out));
    if (Tape* tp = common_tape({&a, &b})) {
        const int an = a.node(), bn = b.node();
        result.attach(tp, tp->emit(a.numel(), [an, bn, broadcast, rows, cols](
                                                  Tape& t, const std::vector<double>& g) {
            if (an >= 0) t.accumulate(an, g.data(), static_cast<std::int64_t>(g.size()));
            if (bn >= 0) {
                if (broadcast) {
                    std::vector<double> db(static_cast<std::size_t>(cols), 0.0);
                    for (std::int64_t i = 0; i < rows; ++i) {
                        const double* grow = g.data() + i * cols;
                        for (std::int64_t j = 0; j < cols; ++j) db[static_cast<std::size_t>(j)] += grow[j];
                    }
                    t.accumulate(bn, db.data(), cols);
                } else {
                    t.accumulate(bn, g.data(), static_cast<std::int64_t>(g.size()));
                }
            }
        }));
    }
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(a.data());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[static_cast<std::size_t>(i)] *= b.at(i);
    check_finite("mul", out);
    Tensor result(a.shape(), std::move(out));
    if (Tape* tp = common_tape({&a, &b})) {
        const int an = a.node(), bn = b.node();
        result.attach(tp, tp->emit(a.numel(), [an, bn, A = a.data(), B = b.data()](
                                                  Tape& t, const std::vector<double>& g) {
            const std::int64_t n = static_cast<std::int64_t>(g.size());
            std::vector<double> buf(g.size());
            if (an >= 0) {
                for (std::int64_t i = 0; i < n; ++i)
                    buf[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)] * B[static_cast<std::size_t>(i)];
                t.accumulate(an, buf.data(), n);
            }
            if (bn >= 0) {
                for (std::int64_t i = 0; i < n; ++i)
                    buf[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)] * A[static_cast<std::size_t>(i)];
                t.accumulate(bn, buf.data(), n);
            }
        }));
    }
    return result;
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.data());
    for (auto& v : out) v *= c;
    check_finite("scale", out);
    Tensor result(a.shape(), std::move(out));
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        result.attach(tp, tp->emit(a.numel(), [an, c](Tape& t, const std::vector<double>& g) {
            std::vector<double> buf(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) buf[i] = g[i] * c;
            t.accumulate(an, buf.data(), static_cast<std::int64_t>(buf.size()));
        }));
    }
    return result;
}

Tensor softmax_rows(const Tensor& a) {
    require_2d(a, "softmax_rows");
    const std::int64_t rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.data().size());
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* xrow = a.data().data() + i * cols;
        double* yrow = out.data() + i * cols;
        double mx = xrow[0];
        for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, xrow[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            yrow[j] = std::exp(xrow[j] - mx);
            sum += yrow[j];
        }
        for (std::int64_t j = 0; j < cols; ++j) yrow[j] /= sum;
    }
    check_finite("softmax_rows", out);
    Tensor result(a.shape(), std::move(out));
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        result.attach(tp, tp->emit(a.numel(), [an, Y = result.data(), rows, cols](
                                                  Tape& t, const std::vector<double>& g) {
            std::vector<double> dx(g.size());
            for (std::int64_t i = 0; i < rows; ++i) {
                const double* yrow = Y.data() + i * cols;
                const double* grow = g.data() + i * cols;
                double dot = 0.0;
                for (std::int64_t j = 0; j < cols; ++j) dot += grow[j] * yrow[j];
                double* drow = dx.data() + i * cols;
                for (std::int64_t j = 0; j < cols; ++j) drow[j] = yrow[j] * (grow[j] - dot);
            }
            t.accumulate(an, dx.data(), static_cast<std::int64_t>(dx.size()));
        }));
    }
    return result;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
    require_2d(a, "layer_norm");
    const std::int64_t rows = a.rows(), cols = a.cols();
    if (gain.numel() != cols || bias.numel() != cols) {
        throw ShapeError("layer_norm: gain/bias width must equal " + std::to_string(cols));
    }
    std::vector<double> xhat(a.data().size());
    std::vector<double> invstd(static_cast<std::size_t>(rows));
    std::vector<double> out(a.data().size());
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* xrow = a.data().data() + i * cols;
        double mean = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) mean += xrow[j];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            const double dv = xrow[j] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        invstd[static_cast<std::size_t>(i)] = is;
        double* hrow = xhat.data() + i * cols;
        double* orow = out.data() + i * cols;
        for (std::int64_t j = 0; j < cols; ++j) {
            hrow[j] = (xrow[j] - mean) * is;
            orow[j] = hrow[j] * gain.at(j) + bias.at(j);
        }
    }
    check_finite("layer_norm", out);
    Tensor result(a.shape(), std::move(out));
    if (Tape* tp = common_tape({&a, &gain, &bias})) {
        const int an = a.node(), gn = gain.node(), bn = bias.node();
        result.attach(tp, tp->emit(a.numel(), [an, gn, bn, G = gain.data(), xhat = std::move(xhat),
                                               invstd = std::move(invstd), rows, cols](
                                                  Tape& t, const std::vector<double>& g) {
            if (bn >= 0) {
                std::vector<double> db(static_cast<std::size_t>(cols), 0.0);
                for (std::int64_t i = 0; i < rows; ++i) {
                    const double* grow = g.data() + i * cols;
                    for (std::int64_t j = 0; j < cols; ++j) db[static_cast<std::size_t>(j)] += grow[j];
                }
                t.accumulate(bn, db.data(), cols);
            }
            if (gn >= 0) {
                std::vector<double> dg(static_cast<std::size_t>(cols), 0.0);
                for (std::int64_t i = 0; i < rows; ++i) {
                    const double* grow = g.data() + i * cols;
                    const double* hrow = xhat.data() + i * cols;
                    for (std::int64_t j = 0; j < cols; ++j) dg[static_cast<std::size_t>(j)] += grow[j] * hrow[j];
                }
                t.accumulate(gn, dg.data(), cols);
            }
            if (an >= 0) {
                std::vector<double> dx(g.size());
                const double inv_n = 1.0 / static_cast<double>(cols);
                for (std::int64_t i = 0; i < rows; ++i) {
                    const double* grow = g.data() + i * cols;
                    const double* hrow = xhat.data() + i * cols;
                    double sum_dh = 0.0, sum_dh_h = 0.0;
                    for (std::int64_t j = 0; j < cols; ++j) {
                        const double dh = grow[j] * G[static_cast<std::size_t>(j)];
                        sum_dh += dh;
                        sum_dh_h += dh * hrow[j];
                    }
                    const double is = invstd[static_cast<std::size_t>(i)];
                    double* drow = dx.data() + i * cols;
                    for (std::int64_t j = 0; j < cols; ++j) {
                        const double dh = grow[j] * G[static_cast<std::size_t>(j)];
                        drow[j] = is * (dh - inv_n * sum_dh - hrow[j] * inv_n * sum_dh_h);
                    }
                }
                t.accumulate(an, dx.data(), static_cast<std::int64_t>(dx.size()));
            }
        }));
    }
    return result;
}

Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.data().size());
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double x = a.at(i);
        out[static_cast<std::size_t>(i)] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    check_finite("gelu", out);
    Tensor result(a.shape(), std::move(out));
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        result.attach(tp, tp->emit(a.numel(), [an, X = a.data()](Tape& t, const std::vector<double>& g) {
            std::vector<double> dx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = X[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                dx[i] = g[i] * (cdf + x * pdf);
            }
            t.accumulate(an, dx.data(), static_cast<std::int64_t>(dx.size()));
        }));
    }
    return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor result(std::move(shape), a.data());
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        result.attach(tp, tp->emit(a.numel(), [an](Tape& t, const std::vector<double>& g) {
            t.accumulate(an, g.data(), static_cast<std::int64_t>(g.size()));
        }));
    }
    return result;
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const std::int64_t rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.data().size());
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
            out[static_cast<std::size_t>(j * rows + i)] = a.at(i, j);
        }
    }
    Tensor result({cols, rows}, std::move(out));
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        result.attach(tp, tp->emit(a.numel(), [an, rows, cols](Tape& t, const std::vector<double>& g) {
            std::vector<double> dx(g.size());
            for (std::int64_t j = 0; j < cols; ++j) {
                for (std::int64_t i = 0; i < rows; ++i) {
                    dx[static_cast<std::size_t>(i * cols + j)] = g[static_cast<std::size_t>(j * rows + i)];
                }
            }
            t.accumulate(an, dx.data(), static_cast<std::int64_t>(dx.size()));
        }));
    }
    return result;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::int64_t cols = parts[0].cols();
    std::int64_t rows = 0;
    std::vector<const Tensor*> ptrs;
    for (const Tensor& p : parts) {
        require_2d(p, "concat_rows");
        if (p.cols() != cols) {
            throw ShapeError("concat_rows: width mismatch " + shape_str(p.shape()));
        }
        rows += p.rows();
        ptrs.push_back(&p);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(rows * cols));
    for (const Tensor& p : parts) {
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    Tensor result({rows, cols}, std::move(out));
    Tape* tp = nullptr;
    for (const Tensor* p : ptrs) {
        if (p->attached()) {
            if (tp && tp != p->tape()) throw ShapeError("concat_rows: mixed tapes");
            tp = p->tape();
        }
    }
    if (tp) {
        std::vector<int> nodes;
        std::vector<std::int64_t> counts;
        for (const Tensor* p : ptrs) {
            nodes.push_back(p->node());
            counts.push_back(p->numel());
        }
        result.attach(tp, tp->emit(rows * cols, [nodes, counts](Tape& t, const std::vector<double>& g) {
            std::int64_t offset = 0;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                t.accumulate(nodes[i], g.data() + offset, counts[i]);
                offset += counts[i];
            }
        }));
    }
    return result;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::int64_t rows = parts[0].rows();
    std::int64_t cols = 0;
    for (const Tensor& p : parts) {
        require_2d(p, "concat_cols");
        if (p.rows() != rows) {
            throw ShapeError("concat_cols: row-count mismatch " + shape_str(p.shape()));
        }
        cols += p.cols();
    }
    std::vector<double> out(static_cast<std::size_t>(rows * cols));
    std::int64_t col0 = 0;
    for (const Tensor& p : parts) {
        for (std::int64_t i = 0; i < rows; ++i) {
            std::memcpy(out.data() + i * cols + col0, p.data().data() + i * p.cols(),
                        static_cast<std::size_t>(p.cols()) * sizeof(double));
        }
        col0 += p.cols();
    }
    Tensor result({rows, cols}, std::move(out));
    Tape* tp = nullptr;
    for (const Tensor& p : parts) {
        if (p.attached()) {
            if (tp && tp != p.tape()) throw ShapeError("concat_cols: mixed tapes");
            tp = p.tape();
        }
    }
    if (tp) {
        std::vector<int> nodes;
        std::vector<std::int64_t> widths;
        for (const Tensor& p : parts) {
            nodes.push_back(p.node());
            widths.push_back(p.cols());
        }
        result.attach(tp, tp->emit(rows * cols, [nodes, widths, rows, cols](
                                                    Tape& t, const std::vector<double>& g) {
            std::int64_t col0 = 0;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                const std::int64_t w = widths[i];
                if (nodes[i] >= 0) {
                    std::vector<double> part(static_cast<std::size_t>(rows * w));
                    for (std::int64_t r = 0; r < rows; ++r) {
                        std::memcpy(part.data() + r * w, g.data() + r * cols + col0,
                                    static_cast<std::size_t>(w) * sizeof(double));
                    }
                    t.accumulate(nodes[i], part.data(), rows * w);
                }
                col0 += w;
            }
        }));
    }
    return result;
}

Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t nrows) {
    require_2d(a, "slice_rows");
    if (r0 < 0 || nrows < 0 || r0 + nrows > a.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " +
                         std::to_string(r0 + nrows) + ") out of " + shape_str(a.shape()));
    }
    const std::int64_t cols = a.cols();
    std::vector<double> out(a.data().begin() + r0 * cols, a.data().begin() + (r0 + nrows) * cols);
    Tensor result({nrows, cols}, std::move(out));
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        const std::int64_t total = a.numel();
        result.attach(tp, tp->emit(nrows * cols, [an, r0, cols, total](Tape& t, const std::vector<double>& g) {
            std::vector<double> dx(static_cast<std::size_t>(total), 0.0);
            std::memcpy(dx.data() + r0 * cols, g.data(), g.size() * sizeof(double));
            t.accumulate(an, dx.data(), total);
        }));
    }
    return result;
}

Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t ncols) {
    require_2d(a, "slice_cols");
    if (c0 < 0 || ncols < 0 || c0 + ncols > a.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " +
                         std::to_string(c0 + ncols) + ") out of " + shape_str(a.shape()));
    }
    const std::int64_t rows = a.rows(), cols = a.cols();
    std::vector<double> out(static_cast<std::size_t>(rows * ncols));
    for (std::int64_t i = 0; i < rows; ++i) {
        std::memcpy(out.data() + i * ncols, a.data().data() + i * cols + c0,
                    static_cast<std::size_t>(ncols) * sizeof(double));
    }
    Tensor result({rows, ncols}, std::move(out));
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        result.attach(tp, tp->emit(rows * ncols, [an, c0, rows, cols, ncols](
                                                     Tape& t, const std::vector<double>& g) {
            std::vector<double> dx(static_cast<std::size_t>(rows * cols), 0.0);
            for (std::int64_t i = 0; i < rows; ++i) {
                std::memcpy(dx.data() + i * cols + c0, g.data() + i * ncols,
                            static_cast<std::size_t>(ncols) * sizeof(double));
            }
            t.accumulate(an, dx.data(), rows * cols);
        }));
    }
    return result;
}

Tensor mean_rows(const Tensor& a) {
    require_2d(a, "mean_rows");
    const std::int64_t rows = a.rows(), cols = a.cols();
    if (rows == 0) throw ShapeError("mean_rows: empty tensor");
    std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) out[static_cast<std::size_t>(j)] += a.at(i, j);
    }
    const double inv = 1.0 / static_cast<double>(rows);
    for (auto& v : out) v *= inv;
    check_finite("mean_rows", out);
    Tensor result({1, cols}, std::move(out));
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        result.attach(tp, tp->emit(cols, [an, rows, cols, inv](Tape& t, const std::vector<double>& g) {
            std::vector<double> dx(static_cast<std::size_t>(rows * cols));
            for (std::int64_t i = 0; i < rows; ++i) {
                for (std::int64_t j = 0; j < cols; ++j) {
                    dx[static_cast<std::size_t>(i * cols + j)] = g[static_cast<std::size_t>(j)] * inv;
                }
            }
            t.accumulate(an, dx.data(), rows * cols);
        }));
    }
    return result;
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    check_finite("sum_all", {s});
    Tensor result({1}, {s});
    if (Tape* tp = common_tape({&a})) {
        const int an = a.node();
        const std::int64_t n = a.numel();
        result.attach(tp, tp->emit(1, [an, n](Tape& t, const std::vector<double>& g) {
            std::vector<double> dx(static_cast<std::size_t>(n), g[0]);
            t.accumulate(an, dx.data(), n);
        }));
    }
    return result;
}

Tensor mean_of(const std::vector<Tensor>& scalars) {
    if (scalars.empty()) throw ShapeError("mean_of: no inputs");
    double s = 0.0;
    Tape* tp = nullptr;
    for (const Tensor& t : scalars) {
        if (t.numel() != 1) throw ShapeError("mean_of: inputs must be scalar");
        s += t.at(0);
        if (t.attached()) {
            if (tp && tp != t.tape()) throw ShapeError("mean_of: mixed tapes");
            tp = t.tape();
        }
    }
    const double inv = 1.0 / static_cast<double>(scalars.size());
    check_finite("mean_of", {s * inv});
    Tensor result({1}, {s * inv});
    if (tp) {
        std::vector<int> nodes;
        for (const Tensor& t : scalars) nodes.push_back(t.node());
        result.attach(tp, tp->emit(1, [nodes, inv](Tape& t, const std::vector<double>& g) {
            const double gi = g[0] * inv;
            for (int node : nodes) t.accumulate(node, &gi, 1);
        }));
    }
    return result;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    require_2d(table, "embedding");
    const std::int64_t vocab = table.rows(), width = table.cols();
    const std::int64_t len = static_cast<std::int64_t>(ids.size());
    std::vector<double> out(static_cast<std::size_t>(len * width));
    for (std::int64_t i = 0; i < len; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        if (id < 0 || id >= vocab) {
            throw ValidationError("embedding: id " + std::to_string(id) + " out of vocabulary size " +
                                  std::to_string(vocab));
        }
        std::memcpy(out.data() + i * width, table.data().data() + id * width,
                    static_cast<std::size_t>(width) * sizeof(double));
    }
    Tensor result({len, width}, std::move(out));
    if (Tape* tp = common_tape({&table})) {
        const int tn = table.node();
        result.attach(tp, tp->emit(len * width, [tn, ids, vocab, width, len](
                                                    Tape& t, const std::vector<double>& g) {
            std::vector<double> dt(static_cast<std::size_t>(vocab * width), 0.0);
            for (std::int64_t i = 0; i < len; ++i) {
                const int id = ids[static_cast<std::size_t>(i)];
                double* drow = dt.data() + id * width;
                const double* grow = g.data() + i * width;
                for (std::int64_t j = 0; j < width; ++j) drow[j] += grow[j];
            }
            t.accumulate(tn, dt.data(), vocab * width);
        }));
    }
    return result;
}

Tensor cross_entropy(const Tensor& logits, int target) {
    if (logits.rows() != 1) {
        throw ShapeError("cross_entropy: logits must be a single row, got " + shape_str(logits.shape()));
    }
    const std::int64_t classes = logits.cols();
    if (target < 0 || target >= classes) {
        throw ValidationError("cross_entropy: target " + std::to_string(target) +
                              " out of range for " + std::to_string(classes) + " classes");
    }
    double mx = logits.at(0);
    for (std::int64_t j = 1; j < classes; ++j) mx = std::max(mx, logits.at(j));
    double sum = 0.0;
    std::vector<double> probs(static_cast<std::size_t>(classes));
    for (std::int64_t j = 0; j < classes; ++j) {
        probs[static_cast<std::size_t>(j)] = std::exp(logits.at(j) - mx);
        sum += probs[static_cast<std::size_t>(j)];
    }
    for (auto& p : probs) p /= sum;
    const double loss = mx + std::log(sum) - logits.at(target);
    check_finite("cross_entropy", {loss});
    Tensor result({1}, {loss});
    if (Tape* tp = common_tape({&logits})) {
        const int ln = logits.node();
        result.attach(tp, tp->emit(1, [ln, probs = std::move(probs), target](
                                          Tape& t, const std::vector<double>& g) {
            std::vector<double> dx(probs.size());
            for (std::size_t j = 0; j < probs.size(); ++j) dx[j] = g[0] * probs[j];
            dx[static_cast<std::size_t>(target)] -= g[0];
            t.accumulate(ln, dx.data(), static_cast<std::int64_t>(dx.size()));
        }));
    }
    return result;
}

}  // namespace histplan
