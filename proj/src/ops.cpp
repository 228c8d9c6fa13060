#include "mapnet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace mapnet::ops {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

MapCM as_mat(const Tensor& t, int rows, int cols) {
    return MapCM(t.data(), rows, cols);
}

MapM as_mat(Tensor& t, int rows, int cols) {
    return MapM(t.data(), rows, cols);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    MAPNET_REQUIRE(a.val().same_shape(b.val()), std::string(op) + ": shape mismatch");
}

}  // namespace

Var constant(Tensor t) {
    return Var::leaf(std::move(t), false);
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out = a.val();
    const double* pb = b.val().data();
    for (int i = 0; i < out.size(); ++i) out[i] += pb[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node* p = n.parents[k].get();
            if (!p->requires_grad) continue;
            Tensor& g = p->grad_buffer();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Var add_rowvec(const Var& a, const Var& b) {
    MAPNET_REQUIRE(a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0),
                   "add_rowvec: expect {n,d} + {d}");
    const int rows = a.dim(0), d = a.dim(1);
    Tensor out = a.val();
    const double* pb = b.val().data();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) += pb[j];
    return make_op(std::move(out), {a, b}, [rows, d](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb_ = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->grad_buffer();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pb_->requires_grad) {
            Tensor& g = pb_->grad_buffer();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < d; ++j) g[j] += n.grad.at(i, j);
        }
    });
}

Var add_const(const Var& a, const Tensor& c) {
    MAPNET_REQUIRE(a.val().same_shape(c), "add_const: shape mismatch");
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] += c[i];
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] += s;
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a.val();
    const double* pb = b.val().data();
    for (int i = 0; i < out.size(); ++i) out[i] -= pb[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb_ = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->grad_buffer();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pb_->requires_grad) {
            Tensor& g = pb_->grad_buffer();
            for (int i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var neg(const Var& a) {
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] = -out[i];
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a.val();
    const double* pb = b.val().data();
    for (int i = 0; i < out.size(); ++i) out[i] *= pb[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb_ = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->grad_buffer();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb_->value[i];
        }
        if (pb_->requires_grad) {
            Tensor& g = pb_->grad_buffer();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa->value[i];
        }
    });
}

Var mul_scalar(const Var& a, double s) {
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] *= s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a, b, "div");
    Tensor out = a.val();
    const double* pb = b.val().data();
    for (int i = 0; i < out.size(); ++i) out[i] /= pb[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb_ = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->grad_buffer();
            for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] / pb_->value[i];
        }
        if (pb_->requires_grad) {
            Tensor& g = pb_->grad_buffer();
            for (int i = 0; i < g.size(); ++i) {
                const double bv = pb_->value[i];
                g[i] -= n.grad[i] * pa->value[i] / (bv * bv);
            }
        }
    });
}

namespace {

Var binary_select(const Var& a, const Var& b, bool take_max) {
    require_same_shape(a, b, take_max ? "vmax" : "vmin");
    Tensor out = a.val();
    const double* pb = b.val().data();
    std::vector<uint8_t> from_a(static_cast<size_t>(out.size()));
    for (int i = 0; i < out.size(); ++i) {
        const bool pick_a = take_max ? (out[i] >= pb[i]) : (out[i] <= pb[i]);
        from_a[static_cast<size_t>(i)] = pick_a ? 1 : 0;
        if (!pick_a) out[i] = pb[i];
    }
    return make_op(std::move(out), {a, b}, [from_a = std::move(from_a)](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb_ = n.parents[1].get();
        for (int i = 0; i < n.grad.size(); ++i) {
            Node* tgt = from_a[static_cast<size_t>(i)] ? pa : pb_;
            if (tgt->requires_grad) tgt->grad_buffer()[i] += n.grad[i];
        }
    });
}

}  // namespace

Var vmax(const Var& a, const Var& b) { return binary_select(a, b, true); }
Var vmin(const Var& a, const Var& b) { return binary_select(a, b, false); }

Var vmax_scalar(const Var& a, double c) {
    Tensor out = a.val();
    std::vector<uint8_t> from_a(static_cast<size_t>(out.size()));
    for (int i = 0; i < out.size(); ++i) {
        from_a[static_cast<size_t>(i)] = out[i] >= c ? 1 : 0;
        if (out[i] < c) out[i] = c;
    }
    return make_op(std::move(out), {a}, [from_a = std::move(from_a)](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i)
            if (from_a[static_cast<size_t>(i)]) g[i] += n.grad[i];
    });
}

Var vmin_scalar(const Var& a, double c) {
    Tensor out = a.val();
    std::vector<uint8_t> from_a(static_cast<size_t>(out.size()));
    for (int i = 0; i < out.size(); ++i) {
        from_a[static_cast<size_t>(i)] = out[i] <= c ? 1 : 0;
        if (out[i] > c) out[i] = c;
    }
    return make_op(std::move(out), {a}, [from_a = std::move(from_a)](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i)
            if (from_a[static_cast<size_t>(i)]) g[i] += n.grad[i];
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Tensor y = out;
    return make_op(std::move(out), {a}, [y = std::move(y)](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * y[i] * (1.0 - y[i]);
    });
}

Var relu(const Var& a) {
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return make_op(std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        Tensor& g = p->grad_buffer();
        for (int i = 0; i < g.size(); ++i)
            if (p->value[i] > 0.0) g[i] += n.grad[i];
    });
}

Var log_v(const Var& a) {
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
    return make_op(std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        Tensor& g = p->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] / p->value[i];
    });
}

Var sqrt_v(const Var& a) {
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
    Tensor y = out;
    return make_op(std::move(out), {a}, [y = std::move(y)](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * 0.5 / y[i];
    });
}

Var abs_v(const Var& a) {
    Tensor out = a.val();
    for (int i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
    return make_op(std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        Tensor& g = p->grad_buffer();
        for (int i = 0; i < g.size(); ++i)
            g[i] += p->value[i] >= 0.0 ? n.grad[i] : -n.grad[i];
    });
}

Var softmax_rows(const Var& a) {
    MAPNET_REQUIRE(a.rank() == 2, "softmax_rows: expect 2-D input");
    const int rows = a.dim(0), d = a.dim(1);
    Tensor out = a.val();
    for (int i = 0; i < rows; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < d; ++j) m = std::max(m, out.at(i, j));
        double z = 0.0;
        for (int j = 0; j < d; ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - m);
            z += out.at(i, j);
        }
        for (int j = 0; j < d; ++j) out.at(i, j) /= z;
    }
    Tensor y = out;
    return make_op(std::move(out), {a}, [y = std::move(y), rows, d](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += n.grad.at(i, j) * y.at(i, j);
            for (int j = 0; j < d; ++j)
                g.at(i, j) += y.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    MAPNET_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                   "matmul: incompatible shapes");
    const int m = a.dim(0), k = a.dim(1), n_ = b.dim(1);
    Tensor out({m, n_});
    as_mat(out, m, n_).noalias() = as_mat(a.val(), m, k) * as_mat(b.val(), k, n_);
    return make_op(std::move(out), {a, b}, [m, k, n_](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            as_mat(pa->grad_buffer(), m, k).noalias() +=
                as_mat(n.grad, m, n_) * as_mat(pb->value, k, n_).transpose();
        }
        if (pb->requires_grad) {
            as_mat(pb->grad_buffer(), k, n_).noalias() +=
                as_mat(pa->value, m, k).transpose() * as_mat(n.grad, m, n_);
        }
    });
}

Var transpose(const Var& a) {
    MAPNET_REQUIRE(a.rank() == 2, "transpose: expect 2-D");
    const int m = a.dim(0), k = a.dim(1);
    Tensor out({k, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) out.at(j, i) = a.val().at(i, j);
    return make_op(std::move(out), {a}, [m, k](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) g.at(i, j) += n.grad.at(j, i);
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    return add_rowvec(matmul(x, w), b);
}

Var sum_all(const Var& a) {
    double s = 0.0;
    for (int i = 0; i < a.val().size(); ++i) s += a.val()[i];
    return make_op(Tensor::scalar(s), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[0];
    });
}

Var mean_all(const Var& a) {
    return mul_scalar(sum_all(a), 1.0 / a.val().size());
}

Var dot_const(const Var& a, const Tensor& w) {
    MAPNET_REQUIRE(a.val().same_shape(w), "dot_const: shape mismatch");
    double s = 0.0;
    for (int i = 0; i < w.size(); ++i) s += a.val()[i] * w[i];
    return make_op(Tensor::scalar(s), {a}, [w](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[0] * w[i];
    });
}

Var gather_rows(const Var& a, std::vector<int> idx) {
    MAPNET_REQUIRE(a.rank() == 2, "gather_rows: expect 2-D");
    const int d = a.dim(1);
    Tensor out({static_cast<int>(idx.size()), d});
    for (size_t i = 0; i < idx.size(); ++i) {
        MAPNET_REQUIRE(idx[i] >= 0 && idx[i] < a.dim(0), "gather_rows: index out of range");
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = a.val().at(idx[i], j);
    }
    return make_op(std::move(out), {a}, [idx = std::move(idx), d](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < d; ++j) g.at(idx[i], j) += n.grad.at(static_cast<int>(i), j);
    });
}

Var select_per_row(const Var& a, std::vector<int> idx) {
    MAPNET_REQUIRE(a.rank() == 2 && static_cast<int>(idx.size()) == a.dim(0),
                   "select_per_row: index count must equal row count");
    const int rows = a.dim(0);
    Tensor out({rows});
    for (int i = 0; i < rows; ++i) {
        MAPNET_REQUIRE(idx[static_cast<size_t>(i)] >= 0 && idx[static_cast<size_t>(i)] < a.dim(1),
                       "select_per_row: column out of range");
        out[i] = a.val().at(i, idx[static_cast<size_t>(i)]);
    }
    return make_op(std::move(out), {a}, [idx = std::move(idx), rows](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < rows; ++i) g.at(i, idx[static_cast<size_t>(i)]) += n.grad[i];
    });
}

Var concat_rows(const Var& a, const Var& b) {
    MAPNET_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
                   "concat_rows: column mismatch");
    const int ra = a.dim(0), rb = b.dim(0), d = a.dim(1);
    Tensor out({ra + rb, d});
    std::copy(a.val().data(), a.val().data() + ra * d, out.data());
    std::copy(b.val().data(), b.val().data() + rb * d, out.data() + ra * d);
    return make_op(std::move(out), {a, b}, [ra, rb, d](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->grad_buffer();
            for (int i = 0; i < ra * d; ++i) g[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            Tensor& g = pb->grad_buffer();
            for (int i = 0; i < rb * d; ++i) g[i] += n.grad[ra * d + i];
        }
    });
}

Var concat_cols(const Var& a, const Var& b) {
    MAPNET_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0),
                   "concat_cols: row mismatch");
    const int rows = a.dim(0), da = a.dim(1), db = b.dim(1);
    Tensor out({rows, da + db});
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < da; ++j) out.at(i, j) = a.val().at(i, j);
        for (int j = 0; j < db; ++j) out.at(i, da + j) = b.val().at(i, j);
    }
    return make_op(std::move(out), {a, b}, [rows, da, db](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->grad_buffer();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < da; ++j) g.at(i, j) += n.grad.at(i, j);
        }
        if (pb->requires_grad) {
            Tensor& g = pb->grad_buffer();
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < db; ++j) g.at(i, j) += n.grad.at(i, da + j);
        }
    });
}

Var slice_rows(const Var& a, int lo, int hi) {
    MAPNET_REQUIRE(a.rank() == 2 && 0 <= lo && lo < hi && hi <= a.dim(0),
                   "slice_rows: bad range");
    const int d = a.dim(1);
    Tensor out({hi - lo, d});
    std::copy(a.val().data() + lo * d, a.val().data() + hi * d, out.data());
    return make_op(std::move(out), {a}, [lo, hi, d](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < (hi - lo) * d; ++i) g[lo * d + i] += n.grad[i];
    });
}

Var slice_cols(const Var& a, int lo, int hi) {
    MAPNET_REQUIRE(a.rank() == 2 && 0 <= lo && lo < hi && hi <= a.dim(1),
                   "slice_cols: bad range");
    const int rows = a.dim(0);
    Tensor out({rows, hi - lo});
    for (int i = 0; i < rows; ++i)
        for (int j = lo; j < hi; ++j) out.at(i, j - lo) = a.val().at(i, j);
    return make_op(std::move(out), {a}, [rows, lo, hi](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < rows; ++i)
            for (int j = lo; j < hi; ++j) g.at(i, j) += n.grad.at(i, j - lo);
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    MAPNET_REQUIRE(Tensor::shape_size(shape) == a.val().size(), "reshape: element count mismatch");
    Tensor out(std::move(shape),
               std::vector<double>(a.val().data(), a.val().data() + a.val().size()));
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int dilation, bool same_pad) {
    MAPNET_REQUIRE(x.rank() == 3 && w.rank() == 4, "conv2d: expect x {H,W,C}, w {kh,kw,cin,cout}");
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    const int kh = w.dim(0), kw = w.dim(1), cin = w.dim(2), cout = w.dim(3);
    MAPNET_REQUIRE(cin == C, "conv2d: channel mismatch");
    MAPNET_REQUIRE(stride >= 1 && dilation >= 1, "conv2d: bad stride/dilation");
    const int eff_kh = (kh - 1) * dilation + 1;
    const int eff_kw = (kw - 1) * dilation + 1;
    const int ph = same_pad ? (eff_kh - 1) / 2 : 0;
    const int pw = same_pad ? (eff_kw - 1) / 2 : 0;
    const int Ho = (H + 2 * ph - eff_kh) / stride + 1;
    const int Wo = (W + 2 * pw - eff_kw) / stride + 1;
    MAPNET_REQUIRE(Ho >= 1 && Wo >= 1, "conv2d: output would be empty");

    const int patch = kh * kw * cin;
    Tensor cols({Ho * Wo, patch});
    {
        const Tensor& xv = x.val();
        double* pc = cols.data();
        for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride - ph + ky * dilation;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride - pw + kx * dilation;
                        if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
                            const double* src = xv.data() + (static_cast<size_t>(iy) * W + ix) * C;
                            std::copy(src, src + C, pc);
                        } else {
                            std::fill(pc, pc + C, 0.0);
                        }
                        pc += C;
                    }
                }
            }
        }
    }

    Tensor out({Ho, Wo, cout});
    as_mat(out, Ho * Wo, cout).noalias() =
        as_mat(cols, Ho * Wo, patch) * as_mat(w.val(), patch, cout);
    if (b.defined()) {
        MAPNET_REQUIRE(b.rank() == 1 && b.dim(0) == cout, "conv2d: bias shape");
        for (int i = 0; i < Ho * Wo; ++i)
            for (int c = 0; c < cout; ++c) out[i * cout + c] += b.val()[c];
    }

    std::vector<Var> parents = {x, w};
    if (b.defined()) parents.push_back(b);
    return make_op(std::move(out), std::move(parents),
                   [cols = std::move(cols), H, W, C, kh, kw, cout, stride, dilation, ph, pw, Ho,
                    Wo, patch](Node& n) {
                       Node* px = n.parents[0].get();
                       Node* pw_ = n.parents[1].get();
                       if (pw_->requires_grad) {
                           as_mat(pw_->grad_buffer(), patch, cout).noalias() +=
                               as_mat(cols, Ho * Wo, patch).transpose() *
                               as_mat(n.grad, Ho * Wo, cout);
                       }
                       if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
                           Tensor& gb = n.parents[2]->grad_buffer();
                           for (int i = 0; i < Ho * Wo; ++i)
                               for (int c = 0; c < cout; ++c) gb[c] += n.grad[i * cout + c];
                       }
                       if (px->requires_grad) {
                           Tensor dcols({Ho * Wo, patch});
                           as_mat(dcols, Ho * Wo, patch).noalias() =
                               as_mat(n.grad, Ho * Wo, cout) *
                               as_mat(pw_->value, patch, cout).transpose();
                           Tensor& gx = px->grad_buffer();
                           const double* pc = dcols.data();
                           for (int oy = 0; oy < Ho; ++oy) {
                               for (int ox = 0; ox < Wo; ++ox) {
                                   for (int ky = 0; ky < kh; ++ky) {
                                       const int iy = oy * stride - ph + ky * dilation;
                                       for (int kx = 0; kx < kw; ++kx) {
                                           const int ix = ox * stride - pw + kx * dilation;
                                           if (iy >= 0 && iy < H && ix >= 0 && ix < W) {
                                               double* dst =
                                                   gx.data() +
                                                   (static_cast<size_t>(iy) * W + ix) * C;
                                               for (int c = 0; c < C; ++c) dst[c] += pc[c];
                                           }
                                           pc += C;
                                       }
                                   }
                               }
                           }
                       }
                   });
}

Var maxpool2d(const Var& x, int k, int stride, int pad) {
    MAPNET_REQUIRE(x.rank() == 3, "maxpool2d: expect {H,W,C}");
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    MAPNET_REQUIRE(Ho >= 1 && Wo >= 1, "maxpool2d: output would be empty");
    Tensor out({Ho, Wo, C});
    std::vector<int> arg(static_cast<size_t>(Ho) * Wo * C, -1);
    const Tensor& xv = x.val();
    for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox) {
            for (int c = 0; c < C; ++c) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        const int idx = (iy * W + ix) * C + c;
                        if (xv[idx] > best) {
                            best = xv[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.at(oy, ox, c) = best;
                arg[(static_cast<size_t>(oy) * Wo + ox) * C + c] = best_idx;
            }
        }
    }
    return make_op(std::move(out), {x}, [arg = std::move(arg)](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < n.grad.size(); ++i) {
            const int src = arg[static_cast<size_t>(i)];
            if (src >= 0) g[src] += n.grad[i];
        }
    });
}

Var global_max_pool_hw(const Var& x) {
    MAPNET_REQUIRE(x.rank() == 3, "global_max_pool_hw: expect {H,W,C}");
    const int HW = x.dim(0) * x.dim(1), C = x.dim(2);
    Tensor out({C});
    std::vector<int> arg(static_cast<size_t>(C), 0);
    const Tensor& xv = x.val();
    for (int c = 0; c < C; ++c) {
        double best = xv[c];
        int bi = 0;
        for (int i = 1; i < HW; ++i) {
            if (xv[i * C + c] > best) {
                best = xv[i * C + c];
                bi = i;
            }
        }
        out[c] = best;
        arg[static_cast<size_t>(c)] = bi;
    }
    return make_op(std::move(out), {x}, [arg = std::move(arg), C](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int c = 0; c < C; ++c) g[arg[static_cast<size_t>(c)] * C + c] += n.grad[c];
    });
}

Var global_avg_pool_hw(const Var& x) {
    MAPNET_REQUIRE(x.rank() == 3, "global_avg_pool_hw: expect {H,W,C}");
    const int HW = x.dim(0) * x.dim(1), C = x.dim(2);
    Tensor out({C});
    const Tensor& xv = x.val();
    for (int i = 0; i < HW; ++i)
        for (int c = 0; c < C; ++c) out[c] += xv[i * C + c];
    for (int c = 0; c < C; ++c) out[c] /= HW;
    return make_op(std::move(out), {x}, [HW, C](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < HW; ++i)
            for (int c = 0; c < C; ++c) g[i * C + c] += n.grad[c] / HW;
    });
}

Var channel_max_pool(const Var& x) {
    MAPNET_REQUIRE(x.rank() == 3, "channel_max_pool: expect {H,W,C}");
    const int HW = x.dim(0) * x.dim(1), C = x.dim(2);
    Tensor out({x.dim(0), x.dim(1), 1});
    std::vector<int> arg(static_cast<size_t>(HW), 0);
    const Tensor& xv = x.val();
    for (int i = 0; i < HW; ++i) {
        double best = xv[i * C];
        int bc = 0;
        for (int c = 1; c < C; ++c) {
            if (xv[i * C + c] > best) {
                best = xv[i * C + c];
                bc = c;
            }
        }
        out[i] = best;
        arg[static_cast<size_t>(i)] = bc;
    }
    return make_op(std::move(out), {x}, [arg = std::move(arg), HW, C](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < HW; ++i) g[i * C + arg[static_cast<size_t>(i)]] += n.grad[i];
    });
}

Var channel_avg_pool(const Var& x) {
    MAPNET_REQUIRE(x.rank() == 3, "channel_avg_pool: expect {H,W,C}");
    const int HW = x.dim(0) * x.dim(1), C = x.dim(2);
    Tensor out({x.dim(0), x.dim(1), 1});
    const Tensor& xv = x.val();
    for (int i = 0; i < HW; ++i) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += xv[i * C + c];
        out[i] = s / C;
    }
    return make_op(std::move(out), {x}, [HW, C](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < HW; ++i)
            for (int c = 0; c < C; ++c) g[i * C + c] += n.grad[i] / C;
    });
}

Var mul_channel_gate(const Var& x, const Var& g) {
    MAPNET_REQUIRE(x.rank() == 3 && g.rank() == 1 && g.dim(0) == x.dim(2),
                   "mul_channel_gate: gate must be {C}");
    const int HW = x.dim(0) * x.dim(1), C = x.dim(2);
    Tensor out = x.val();
    const double* pg = g.val().data();
    for (int i = 0; i < HW; ++i)
        for (int c = 0; c < C; ++c) out[i * C + c] *= pg[c];
    return make_op(std::move(out), {x, g}, [HW, C](Node& n) {
        Node* px = n.parents[0].get();
        Node* pg_ = n.parents[1].get();
        if (px->requires_grad) {
            Tensor& gx = px->grad_buffer();
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) gx[i * C + c] += n.grad[i * C + c] * pg_->value[c];
        }
        if (pg_->requires_grad) {
            Tensor& gg = pg_->grad_buffer();
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) gg[c] += n.grad[i * C + c] * px->value[i * C + c];
        }
    });
}

Var mul_pixel_gate(const Var& x, const Var& g) {
    MAPNET_REQUIRE(x.rank() == 3 && g.rank() == 3 && g.dim(0) == x.dim(0) &&
                       g.dim(1) == x.dim(1) && g.dim(2) == 1,
                   "mul_pixel_gate: gate must be {H,W,1}");
    const int HW = x.dim(0) * x.dim(1), C = x.dim(2);
    Tensor out = x.val();
    const double* pg = g.val().data();
    for (int i = 0; i < HW; ++i)
        for (int c = 0; c < C; ++c) out[i * C + c] *= pg[i];
    return make_op(std::move(out), {x, g}, [HW, C](Node& n) {
        Node* px = n.parents[0].get();
        Node* pg_ = n.parents[1].get();
        if (px->requires_grad) {
            Tensor& gx = px->grad_buffer();
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) gx[i * C + c] += n.grad[i * C + c] * pg_->value[i];
        }
        if (pg_->requires_grad) {
            Tensor& gg = pg_->grad_buffer();
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) gg[i] += n.grad[i * C + c] * px->value[i * C + c];
        }
    });
}

Var channel_affine(const Var& x, const Var& s, const Var& t) {
    MAPNET_REQUIRE(x.rank() == 3 && s.rank() == 1 && t.rank() == 1 && s.dim(0) == x.dim(2) &&
                       t.dim(0) == x.dim(2),
                   "channel_affine: scale/shift must be {C}");
    const int HW = x.dim(0) * x.dim(1), C = x.dim(2);
    Tensor out = x.val();
    const double* ps = s.val().data();
    const double* pt = t.val().data();
    for (int i = 0; i < HW; ++i)
        for (int c = 0; c < C; ++c) out[i * C + c] = out[i * C + c] * ps[c] + pt[c];
    return make_op(std::move(out), {x, s, t}, [HW, C](Node& n) {
        Node* px = n.parents[0].get();
        Node* ps_ = n.parents[1].get();
        Node* pt_ = n.parents[2].get();
        if (px->requires_grad) {
            Tensor& g = px->grad_buffer();
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) g[i * C + c] += n.grad[i * C + c] * ps_->value[c];
        }
        if (ps_->requires_grad) {
            Tensor& g = ps_->grad_buffer();
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) g[c] += n.grad[i * C + c] * px->value[i * C + c];
        }
        if (pt_->requires_grad) {
            Tensor& g = pt_->grad_buffer();
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) g[c] += n.grad[i * C + c];
        }
    });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
    MAPNET_REQUIRE(x.rank() == 2 && gamma.rank() == 1 && beta.rank() == 1 &&
                       gamma.dim(0) == x.dim(1) && beta.dim(0) == x.dim(1),
                   "layer_norm_rows: shape mismatch");
    const int rows = x.dim(0), d = x.dim(1);
    Tensor out({rows, d});
    Tensor xhat({rows, d});
    Tensor inv_std({rows});
    const Tensor& xv = x.val();
    for (int i = 0; i < rows; ++i) {
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += xv.at(i, j);
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xv.at(i, j) - mu;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < d; ++j) {
            xhat.at(i, j) = (xv.at(i, j) - mu) * is;
            out.at(i, j) = xhat.at(i, j) * gamma.val()[j] + beta.val()[j];
        }
    }
    return make_op(std::move(out), {x, gamma, beta},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Node& n) {
                       Node* px = n.parents[0].get();
                       Node* pgm = n.parents[1].get();
                       Node* pbt = n.parents[2].get();
                       if (pbt->requires_grad) {
                           Tensor& g = pbt->grad_buffer();
                           for (int i = 0; i < rows; ++i)
                               for (int j = 0; j < d; ++j) g[j] += n.grad.at(i, j);
                       }
                       if (pgm->requires_grad) {
                           Tensor& g = pgm->grad_buffer();
                           for (int i = 0; i < rows; ++i)
                               for (int j = 0; j < d; ++j) g[j] += n.grad.at(i, j) * xhat.at(i, j);
                       }
                       if (px->requires_grad) {
                           Tensor& g = px->grad_buffer();
                           for (int i = 0; i < rows; ++i) {
                               double m1 = 0.0, m2 = 0.0;
                               for (int j = 0; j < d; ++j) {
                                   const double dxh = n.grad.at(i, j) * pgm->value[j];
                                   m1 += dxh;
                                   m2 += dxh * xhat.at(i, j);
                               }
                               m1 /= d;
                               m2 /= d;
                               for (int j = 0; j < d; ++j) {
                                   const double dxh = n.grad.at(i, j) * pgm->value[j];
                                   g.at(i, j) += (dxh - m1 - xhat.at(i, j) * m2) * inv_std[i];
                               }
                           }
                       }
                   });
}

Var dropout_mask(const Var& x, const Tensor& mask) {
    MAPNET_REQUIRE(x.val().same_shape(mask), "dropout_mask: shape mismatch");
    Tensor out = x.val();
    for (int i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return make_op(std::move(out), {x}, [mask](Node& n) {
        Tensor& g = n.parents[0]->grad_buffer();
        for (int i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mask[i];
    });
}

Var detach(const Var& a) {
    return Var::leaf(a.val(), false);
}

}  // namespace mapnet::ops
