#include "cyclecorr/graph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace cyclecorr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

CMatMap as_mat(const Tensor& t) {
    return CMatMap(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                   static_cast<Eigen::Index>(t.dim(1)));
}

MatMap as_mat(Tensor& t) {
    return MatMap(t.data(), static_cast<Eigen::Index>(t.dim(0)),
                  static_cast<Eigen::Index>(t.dim(1)));
}

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_2d(const Tensor& t, const char* who) {
    if (t.ndim() != 2) throw std::invalid_argument(std::string(who) + ": expected 2-D tensor");
}

}  // namespace

Graph::NodeId Graph::check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::out_of_range("Graph: bad node id");
    return id;
}

Graph::NodeId Graph::emplace(Tensor value, std::vector<NodeId> inputs,
                             std::function<void(Graph&, NodeId)> backprop) {
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.needs_grad = any_needs_grad(n.inputs);
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

bool Graph::any_needs_grad(const std::vector<NodeId>& ids) const {
    for (NodeId id : ids)
        if (nodes_[id].needs_grad) return true;
    return false;
}

std::vector<Graph::NodeId> Graph::inputs_of(NodeId id) const { return nodes_[check(id)].inputs; }

Graph::NodeId Graph::input(Tensor& leaf) {
    auto it = leaf_ids_.find(&leaf);
    if (it != leaf_ids_.end()) return it->second;
    Node n;
    n.value = leaf;  // snapshot
    n.leaf = &leaf;
    n.needs_grad = leaf.requires_grad;
    nodes_.push_back(std::move(n));
    NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    leaf_ids_.emplace(&leaf, id);
    return id;
}

Graph::NodeId Graph::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::detach(NodeId a) { return constant(value(check(a))); }

Tensor& Graph::adj(NodeId id) {
    Tensor& t = adjoints_[id];
    if (t.size() != nodes_[id].value.size()) t = Tensor::zeros(nodes_[id].value.shape());
    return t;
}

bool Graph::has_adj(NodeId id) const {
    return adjoints_[id].size() == nodes_[id].value.size();
}

// ---------------------------------------------------------------------------
// binary elementwise helpers
// ---------------------------------------------------------------------------

namespace {
enum class BinKind { Add, Sub, Mul, Div };
}

static Tensor binary_forward(BinKind kind, const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.is_scalar();
    const bool b_scalar = b.is_scalar();
    require(a.same_shape(b) || a_scalar || b_scalar,
            "elementwise op: shape mismatch (only scalar broadcast supported)");
    const Tensor& shaped = a_scalar ? b : a;
    Tensor out(shaped.shape());
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a_scalar ? a[0] : a[i];
        const double y = b_scalar ? b[0] : b[i];
        switch (kind) {
            case BinKind::Add: out[i] = x + y; break;
            case BinKind::Sub: out[i] = x - y; break;
            case BinKind::Mul: out[i] = x * y; break;
            case BinKind::Div:
                if (y == 0.0) throw std::domain_error("div: zero divisor");
                out[i] = x / y;
                break;
        }
    }
    return out;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    check(a); check(b);
    Tensor out = binary_forward(BinKind::Add, value(a), value(b));
    return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        auto push = [&](NodeId in) {
            if (!g.nodes_[in].needs_grad) return;
            Tensor& ad = g.adj(in);
            if (ad.is_scalar() && !d.is_scalar()) {
                for (std::size_t i = 0; i < d.size(); ++i) ad[0] += d[i];
            } else {
                for (std::size_t i = 0; i < d.size(); ++i) ad[i] += d[i];
            }
        };
        push(a);
        push(b);
    });
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    check(a); check(b);
    Tensor out = binary_forward(BinKind::Sub, value(a), value(b));
    return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        if (g.nodes_[a].needs_grad) {
            Tensor& ad = g.adj(a);
            if (ad.is_scalar() && !d.is_scalar())
                for (std::size_t i = 0; i < d.size(); ++i) ad[0] += d[i];
            else
                for (std::size_t i = 0; i < d.size(); ++i) ad[i] += d[i];
        }
        if (g.nodes_[b].needs_grad) {
            Tensor& bd = g.adj(b);
            if (bd.is_scalar() && !d.is_scalar())
                for (std::size_t i = 0; i < d.size(); ++i) bd[0] -= d[i];
            else
                for (std::size_t i = 0; i < d.size(); ++i) bd[i] -= d[i];
        }
    });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    check(a); check(b);
    Tensor out = binary_forward(BinKind::Mul, value(a), value(b));
    return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& av = g.value(a);
        const Tensor& bv = g.value(b);
        if (g.nodes_[a].needs_grad) {
            Tensor& ad = g.adj(a);
            if (av.is_scalar() && !d.is_scalar())
                for (std::size_t i = 0; i < d.size(); ++i) ad[0] += d[i] * bv[bv.is_scalar() ? 0 : i];
            else
                for (std::size_t i = 0; i < d.size(); ++i) ad[i] += d[i] * bv[bv.is_scalar() ? 0 : i];
        }
        if (g.nodes_[b].needs_grad) {
            Tensor& bd = g.adj(b);
            if (bv.is_scalar() && !d.is_scalar())
                for (std::size_t i = 0; i < d.size(); ++i) bd[0] += d[i] * av[av.is_scalar() ? 0 : i];
            else
                for (std::size_t i = 0; i < d.size(); ++i) bd[i] += d[i] * av[av.is_scalar() ? 0 : i];
        }
    });
}

Graph::NodeId Graph::div(NodeId a, NodeId b) {
    check(a); check(b);
    Tensor out = binary_forward(BinKind::Div, value(a), value(b));
    return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& av = g.value(a);
        const Tensor& bv = g.value(b);
        const Tensor& ov = g.value(self);
        if (g.nodes_[a].needs_grad) {
            Tensor& ad = g.adj(a);
            if (av.is_scalar() && !d.is_scalar())
                for (std::size_t i = 0; i < d.size(); ++i) ad[0] += d[i] / bv[bv.is_scalar() ? 0 : i];
            else
                for (std::size_t i = 0; i < d.size(); ++i) ad[i] += d[i] / bv[bv.is_scalar() ? 0 : i];
        }
        if (g.nodes_[b].needs_grad) {
            Tensor& bd = g.adj(b);
            if (bv.is_scalar() && !d.is_scalar())
                for (std::size_t i = 0; i < d.size(); ++i)
                    bd[0] -= d[i] * ov[i] / bv[0];
            else
                for (std::size_t i = 0; i < d.size(); ++i)
                    bd[i] -= d[i] * ov[ov.is_scalar() ? 0 : i] / bv[i];
        }
    });
}

// ---------------------------------------------------------------------------

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    check(a); check(b);
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_2d(av, "matmul");
    require_2d(bv, "matmul");
    require(av.dim(1) == bv.dim(0), "matmul: inner dimensions disagree");
    Tensor out({av.dim(0), bv.dim(1)});
    as_mat(out).noalias() = as_mat(av) * as_mat(bv);
    return emplace(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        if (g.nodes_[a].needs_grad)
            as_mat(g.adj(a)).noalias() += as_mat(d) * as_mat(g.value(b)).transpose();
        if (g.nodes_[b].needs_grad)
            as_mat(g.adj(b)).noalias() += as_mat(g.value(a)).transpose() * as_mat(d);
    });
}

Graph::NodeId Graph::transpose(NodeId a) {
    check(a);
    const Tensor& av = value(a);
    require_2d(av, "transpose");
    Tensor out({av.dim(1), av.dim(0)});
    as_mat(out) = as_mat(av).transpose();
    return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
        as_mat(g.adj(a)) += as_mat(g.adj(self)).transpose();
    });
}

Graph::NodeId Graph::add_rowvec(NodeId a, NodeId v) {
    check(a); check(v);
    const Tensor& av = value(a);
    const Tensor& vv = value(v);
    require_2d(av, "add_rowvec");
    require(vv.size() == av.dim(1), "add_rowvec: vector length must equal column count");
    Tensor out(av.shape());
    const std::size_t r = av.dim(0), c = av.dim(1);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) = av(i, j) + vv[j];
    return emplace(std::move(out), {a, v}, [a, v](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const std::size_t r = d.dim(0), c = d.dim(1);
        if (g.nodes_[a].needs_grad) {
            Tensor& ad = g.adj(a);
            for (std::size_t i = 0; i < d.size(); ++i) ad[i] += d[i];
        }
        if (g.nodes_[v].needs_grad) {
            Tensor& vd = g.adj(v);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) vd[j] += d(i, j);
        }
    });
}

Graph::NodeId Graph::scale(NodeId a, double c) {
    check(a);
    Tensor out(value(a).shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(a)[i] * c;
    return emplace(std::move(out), {a}, [a, c](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        Tensor& ad = g.adj(a);
        for (std::size_t i = 0; i < d.size(); ++i) ad[i] += c * d[i];
    });
}

Graph::NodeId Graph::exp(NodeId a) {
    check(a);
    Tensor out(value(a).shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(value(a)[i]);
    return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& o = g.value(self);
        Tensor& ad = g.adj(a);
        for (std::size_t i = 0; i < d.size(); ++i) ad[i] += d[i] * o[i];
    });
}

Graph::NodeId Graph::log(NodeId a) {
    check(a);
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (av[i] <= 0.0) throw std::domain_error("log: non-positive argument");
        out[i] = std::log(av[i]);
    }
    return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& av = g.value(a);
        Tensor& ad = g.adj(a);
        for (std::size_t i = 0; i < d.size(); ++i) ad[i] += d[i] / av[i];
    });
}

Graph::NodeId Graph::relu(NodeId a) {
    check(a);
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& av = g.value(a);
        Tensor& ad = g.adj(a);
        for (std::size_t i = 0; i < d.size(); ++i)
            if (av[i] > 0.0) ad[i] += d[i];
    });
}

Graph::NodeId Graph::abs(NodeId a) {
    check(a);
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(av[i]);
    return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& av = g.value(a);
        Tensor& ad = g.adj(a);
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (av[i] > 0.0) ad[i] += d[i];
            else if (av[i] < 0.0) ad[i] -= d[i];
        }
    });
}

Graph::NodeId Graph::gather_rows(NodeId a, const std::vector<std::size_t>& rows) {
    check(a);
    const Tensor& av = value(a);
    require_2d(av, "gather_rows");
    const std::size_t c = av.dim(1);
    Tensor out({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] < av.dim(0), "gather_rows: index out of range");
        for (std::size_t j = 0; j < c; ++j) out(i, j) = av(rows[i], j);
    }
    return emplace(std::move(out), {a}, [a, rows](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        Tensor& ad = g.adj(a);
        const std::size_t c = d.dim(1);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < c; ++j) ad(rows[i], j) += d(i, j);
    });
}

Graph::NodeId Graph::gather_groups(NodeId a, const std::vector<std::size_t>& table,
                                   std::size_t n, std::size_t k) {
    check(a);
    const Tensor& av = value(a);
    require_2d(av, "gather_groups");
    require(table.size() == n * k, "gather_groups: table size mismatch");
    const std::size_t c = av.dim(1);
    Tensor out({n, k, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t src = table[i * k + j];
            require(src < av.dim(0), "gather_groups: index out of range");
            const double* from = av.data() + src * c;
            double* to = out.data() + (i * k + j) * c;
            std::copy(from, from + c, to);
        }
    return emplace(std::move(out), {a}, [a, table, n, k](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        Tensor& ad = g.adj(a);
        const std::size_t c = ad.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t src = table[i * k + j];
                const double* from = d.data() + (i * k + j) * c;
                double* to = ad.data() + src * c;
                for (std::size_t l = 0; l < c; ++l) to[l] += from[l];
            }
    });
}

Graph::NodeId Graph::max_pool_groups(NodeId a) {
    check(a);
    const Tensor& av = value(a);
    require(av.ndim() == 3, "max_pool_groups: expected (n, k, c) tensor");
    const std::size_t n = av.dim(0), k = av.dim(1), c = av.dim(2);
    Tensor out({n, c});
    std::vector<std::size_t> argmax(n * c, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < c; ++l) {
            double best = av(i, 0, l);
            std::size_t best_j = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (av(i, j, l) > best) {
                    best = av(i, j, l);
                    best_j = j;
                }
            out(i, l) = best;
            argmax[i * c + l] = best_j;
        }
    return emplace(std::move(out), {a}, [a, argmax = std::move(argmax)](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        Tensor& ad = g.adj(a);
        const std::size_t n = d.dim(0), c = d.dim(1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < c; ++l) ad(i, argmax[i * c + l], l) += d(i, l);
    });
}

Graph::NodeId Graph::sum(NodeId a) {
    check(a);
    double s = 0.0;
    for (double x : value(a).values()) s += x;
    return emplace(Tensor::scalar(s), {a}, [a](Graph& g, NodeId self) {
        const double d = g.adj(self)[0];
        Tensor& ad = g.adj(a);
        for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += d;
    });
}

Graph::NodeId Graph::mean(NodeId a) {
    check(a);
    const std::size_t n = value(a).size();
    double s = 0.0;
    for (double x : value(a).values()) s += x;
    return emplace(Tensor::scalar(s / static_cast<double>(n)), {a},
                   [a, n](Graph& g, NodeId self) {
                       const double d = g.adj(self)[0] / static_cast<double>(n);
                       Tensor& ad = g.adj(a);
                       for (std::size_t i = 0; i < ad.size(); ++i) ad[i] += d;
                   });
}

Graph::NodeId Graph::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    check(x); check(gain); check(bias);
    const Tensor& xv = value(x);
    require_2d(xv, "layer_norm");
    const std::size_t r = xv.dim(0), c = xv.dim(1);
    require(value(gain).size() == c && value(bias).size() == c,
            "layer_norm: gain/bias length must equal column count");
    Tensor out({r, c});
    std::vector<double> invstd(r), mean(r);
    const Tensor& gv = value(gain);
    const Tensor& bv = value(bias);
    for (std::size_t i = 0; i < r; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < c; ++j) m += xv(i, j);
        m /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double dlt = xv(i, j) - m;
            var += dlt * dlt;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        mean[i] = m;
        invstd[i] = inv;
        for (std::size_t j = 0; j < c; ++j) out(i, j) = gv[j] * (xv(i, j) - m) * inv + bv[j];
    }
    return emplace(std::move(out), {x, gain, bias},
                   [x, gain, bias, mean = std::move(mean), invstd = std::move(invstd)](
                       Graph& g, NodeId self) {
                       const Tensor& d = g.adj(self);
                       const Tensor& xv = g.value(x);
                       const Tensor& gv = g.value(gain);
                       const std::size_t r = d.dim(0), c = d.dim(1);
                       const bool want_x = g.nodes_[x].needs_grad;
                       const bool want_g = g.nodes_[gain].needs_grad;
                       const bool want_b = g.nodes_[bias].needs_grad;
                       std::vector<double> xhat(c), dxhat(c);
                       for (std::size_t i = 0; i < r; ++i) {
                           for (std::size_t j = 0; j < c; ++j)
                               xhat[j] = (xv(i, j) - mean[i]) * invstd[i];
                           if (want_g) {
                               Tensor& gd = g.adj(gain);
                               for (std::size_t j = 0; j < c; ++j) gd[j] += d(i, j) * xhat[j];
                           }
                           if (want_b) {
                               Tensor& bd = g.adj(bias);
                               for (std::size_t j = 0; j < c; ++j) bd[j] += d(i, j);
                           }
                           if (want_x) {
                               Tensor& xd = g.adj(x);
                               double s1 = 0.0, s2 = 0.0;
                               for (std::size_t j = 0; j < c; ++j) {
                                   dxhat[j] = d(i, j) * gv[j];
                                   s1 += dxhat[j];
                                   s2 += dxhat[j] * xhat[j];
                               }
                               const double cn = static_cast<double>(c);
                               for (std::size_t j = 0; j < c; ++j)
                                   xd(i, j) += invstd[i] * (dxhat[j] - s1 / cn - xhat[j] * s2 / cn);
                           }
                       }
                   });
}

Graph::NodeId Graph::softmax(NodeId x, double tau, Axis axis) {
    check(x);
    require(tau > 0.0, "softmax: temperature must be positive");
    const Tensor& xv = value(x);
    require_2d(xv, "softmax");
    const std::size_t r = xv.dim(0), c = xv.dim(1);
    Tensor out({r, c});
    if (axis == Axis::Rows) {
        for (std::size_t i = 0; i < r; ++i) {
            double mx = xv(i, 0);
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xv(i, j));
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                out(i, j) = std::exp((xv(i, j) - mx) / tau);
                s += out(i, j);
            }
            for (std::size_t j = 0; j < c; ++j) out(i, j) /= s;
        }
    } else {
        for (std::size_t j = 0; j < c; ++j) {
            double mx = xv(0, j);
            for (std::size_t i = 1; i < r; ++i) mx = std::max(mx, xv(i, j));
            double s = 0.0;
            for (std::size_t i = 0; i < r; ++i) {
                out(i, j) = std::exp((xv(i, j) - mx) / tau);
                s += out(i, j);
            }
            for (std::size_t i = 0; i < r; ++i) out(i, j) /= s;
        }
    }
    return emplace(std::move(out), {x}, [x, tau, axis](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& o = g.value(self);
        Tensor& xd = g.adj(x);
        const std::size_t r = d.dim(0), c = d.dim(1);
        if (axis == Axis::Rows) {
            for (std::size_t i = 0; i < r; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += d(i, j) * o(i, j);
                for (std::size_t j = 0; j < c; ++j)
                    xd(i, j) += o(i, j) * (d(i, j) - dot) / tau;
            }
        } else {
            for (std::size_t j = 0; j < c; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < r; ++i) dot += d(i, j) * o(i, j);
                for (std::size_t i = 0; i < r; ++i)
                    xd(i, j) += o(i, j) * (d(i, j) - dot) / tau;
            }
        }
    });
}

Graph::NodeId Graph::row_normalize(NodeId a) {
    check(a);
    const Tensor& av = value(a);
    require_2d(av, "row_normalize");
    const std::size_t r = av.dim(0), c = av.dim(1);
    Tensor out({r, c});
    std::vector<double> sums(r);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += av(i, j);
        if (s == 0.0) throw std::domain_error("row_normalize: zero row sum");
        sums[i] = s;
        for (std::size_t j = 0; j < c; ++j) out(i, j) = av(i, j) / s;
    }
    return emplace(std::move(out), {a}, [a, sums = std::move(sums)](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& o = g.value(self);
        Tensor& ad = g.adj(a);
        const std::size_t r = d.dim(0), c = d.dim(1);
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += d(i, j) * o(i, j);
            for (std::size_t j = 0; j < c; ++j) ad(i, j) += (d(i, j) - dot) / sums[i];
        }
    });
}

Graph::NodeId Graph::col_normalize(NodeId a) {
    check(a);
    const Tensor& av = value(a);
    require_2d(av, "col_normalize");
    const std::size_t r = av.dim(0), c = av.dim(1);
    Tensor out({r, c});
    std::vector<double> sums(c);
    for (std::size_t j = 0; j < c; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < r; ++i) s += av(i, j);
        if (s == 0.0) throw std::domain_error("col_normalize: zero column sum");
        sums[j] = s;
    }
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) = av(i, j) / sums[j];
    return emplace(std::move(out), {a}, [a, sums = std::move(sums)](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& o = g.value(self);
        Tensor& ad = g.adj(a);
        const std::size_t r = d.dim(0), c = d.dim(1);
        for (std::size_t j = 0; j < c; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < r; ++i) dot += d(i, j) * o(i, j);
            for (std::size_t i = 0; i < r; ++i) ad(i, j) += (d(i, j) - dot) / sums[j];
        }
    });
}

Graph::NodeId Graph::l2_normalize_rows(NodeId a) {
    check(a);
    const Tensor& av = value(a);
    require_2d(av, "l2_normalize_rows");
    const std::size_t r = av.dim(0), c = av.dim(1);
    Tensor out({r, c});
    std::vector<double> norms(r);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += av(i, j) * av(i, j);
        const double n = std::max(std::sqrt(s), 1e-12);
        norms[i] = n;
        for (std::size_t j = 0; j < c; ++j) out(i, j) = av(i, j) / n;
    }
    return emplace(std::move(out), {a}, [a, norms = std::move(norms)](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        const Tensor& o = g.value(self);
        Tensor& ad = g.adj(a);
        const std::size_t r = d.dim(0), c = d.dim(1);
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += d(i, j) * o(i, j);
            for (std::size_t j = 0; j < c; ++j) ad(i, j) += (d(i, j) - o(i, j) * dot) / norms[i];
        }
    });
}

Graph::NodeId Graph::slice_cols(NodeId a, std::size_t first, std::size_t width) {
    check(a);
    const Tensor& av = value(a);
    require_2d(av, "slice_cols");
    require(first + width <= av.dim(1), "slice_cols: range out of bounds");
    const std::size_t r = av.dim(0);
    Tensor out({r, width});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < width; ++j) out(i, j) = av(i, first + j);
    return emplace(std::move(out), {a}, [a, first, width](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        Tensor& ad = g.adj(a);
        const std::size_t r = d.dim(0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < width; ++j) ad(i, first + j) += d(i, j);
    });
}

Graph::NodeId Graph::concat_cols(std::span<const NodeId> parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    std::vector<NodeId> ids(parts.begin(), parts.end());
    const Tensor& first = value(check(ids[0]));
    const std::size_t nd = first.ndim();
    require(nd == 2 || nd == 3, "concat_cols: expected 2-D or 3-D tensors");
    std::size_t total_c = 0;
    std::vector<std::size_t> widths;
    for (NodeId id : ids) {
        const Tensor& t = value(check(id));
        require(t.ndim() == nd, "concat_cols: rank mismatch");
        for (std::size_t d = 0; d + 1 < nd; ++d)
            require(t.dim(d) == first.dim(d), "concat_cols: leading dims mismatch");
        widths.push_back(t.dim(nd - 1));
        total_c += t.dim(nd - 1);
    }
    std::vector<std::size_t> shape(first.shape());
    shape[nd - 1] = total_c;
    Tensor out(shape);
    std::size_t lead = 1;
    for (std::size_t d = 0; d + 1 < nd; ++d) lead *= first.dim(d);
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
        const Tensor& t = value(ids[p]);
        for (std::size_t i = 0; i < lead; ++i) {
            const double* from = t.data() + i * widths[p];
            double* to = out.data() + i * total_c + off;
            std::copy(from, from + widths[p], to);
        }
        off += widths[p];
    }
    return emplace(std::move(out), ids,
                   [ids, widths, lead, total_c](Graph& g, NodeId self) {
                       const Tensor& d = g.adj(self);
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < ids.size(); ++p) {
                           if (g.nodes_[ids[p]].needs_grad) {
                               Tensor& ad = g.adj(ids[p]);
                               for (std::size_t i = 0; i < lead; ++i) {
                                   const double* from = d.data() + i * total_c + off;
                                   double* to = ad.data() + i * widths[p];
                                   for (std::size_t l = 0; l < widths[p]; ++l) to[l] += from[l];
                               }
                           }
                           off += widths[p];
                       }
                   });
}

Graph::NodeId Graph::reshape(NodeId a, std::vector<std::size_t> shape) {
    check(a);
    require(Tensor::count(shape) == value(a).size(), "reshape: element count mismatch");
    Tensor out(std::move(shape), value(a).values());
    return emplace(std::move(out), {a}, [a](Graph& g, NodeId self) {
        const Tensor& d = g.adj(self);
        Tensor& ad = g.adj(a);
        for (std::size_t i = 0; i < d.size(); ++i) ad[i] += d[i];
    });
}

void Graph::backward(NodeId loss) {
    check(loss);
    if (!value(loss).is_scalar())
        throw std::invalid_argument("backward: loss must be scalar");
    adjoints_.clear();
    adjoints_.resize(nodes_.size());
    adj(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.needs_grad || !has_adj(id)) continue;
        if (n.backprop) n.backprop(*this, id);
        if (n.leaf && n.leaf->requires_grad) {
            auto& g = n.leaf->ensure_grad();
            const Tensor& a = adjoints_[id];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += a[i];
        }
    }
}

// ---------------------------------------------------------------------------

double grad_check(const LossProgram& program, std::span<Tensor* const> params,
                  double eps, std::size_t samples, std::uint64_t seed) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");
    for (Tensor* p : params) p->zero_grad();
    const double loss0 = program(true);
    if (!std::isfinite(loss0)) throw std::domain_error("grad_check: non-finite loss");

    std::vector<double> analytic;
    std::size_t total = 0;
    for (Tensor* p : params) {
        if (!p->has_grad()) p->ensure_grad();
        for (double gv : p->grad()) {
            if (!std::isfinite(gv)) throw std::domain_error("grad_check: non-finite gradient");
            analytic.push_back(gv);
        }
        total += p->size();
    }

    if (samples == 0) throw std::invalid_argument("grad_check: samples must be positive");
    const std::size_t want = std::min(total, samples);
    std::mt19937_64 rng(seed);
    std::set<std::size_t> picked;
    std::uniform_int_distribution<std::size_t> dist(0, total - 1);
    while (picked.size() < want) picked.insert(dist(rng));

    auto entry = [&](std::size_t flat) -> double& {
        for (Tensor* p : params) {
            if (flat < p->size()) return (*p)[flat];
            flat -= p->size();
        }
        throw std::out_of_range("grad_check: flat index");
    };

    double worst = 0.0;
    for (std::size_t flat : picked) {
        double& x = entry(flat);
        const double saved = x;
        x = saved + eps;
        const double fp = program(false);
        x = saved - eps;
        const double fm = program(false);
        x = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::domain_error("grad_check: non-finite perturbed loss");
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[flat];
        const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace cyclecorr
