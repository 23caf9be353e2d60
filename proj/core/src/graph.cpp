#include "contrastad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace contrastad::diff {

namespace {
constexpr double kPi = 3.14159265358979323846;

// interleaved (cos, sin) of 2*pi*b*t/len for b in [0, bins), t in [0, len);
// cached per length since forward() re-runs hit the same transforms repeatedly
const std::vector<double>& twiddle_table(std::size_t len) {
    thread_local std::vector<std::pair<std::size_t, std::vector<double>>> cache;
    for (auto& entry : cache)
        if (entry.first == len) return entry.second;
    std::size_t bins = len / 2 + 1;
    std::vector<double> table(2 * bins * len);
    for (std::size_t b = 0; b < bins; ++b)
        for (std::size_t t = 0; t < len; ++t) {
            double ang = 2.0 * kPi * static_cast<double>(b) * static_cast<double>(t) /
                         static_cast<double>(len);
            table[(b * len + t) * 2] = std::cos(ang);
            table[(b * len + t) * 2 + 1] = std::sin(ang);
        }
    cache.emplace_back(len, std::move(table));
    return cache.back().second;
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
    throw std::invalid_argument(std::string("op '") + op + "': " + detail);
}

void require_rank_le2(const char* op, const Tensor& t) {
    if (t.rank() > 2) shape_error(op, "expected rank <= 2, got shape " + t.shape_str());
}
}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::MatMul: return "matmul";
        case Op::AddRowVec: return "add_rowvec";
        case Op::Conv1d: return "conv1d";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Relu: return "relu";
        case Op::LeakyRelu: return "leaky_relu";
        case Op::Softmax: return "softmax";
        case Op::LayerNorm: return "layer_norm";
        case Op::Dropout: return "dropout";
        case Op::Concat: return "concat";
        case Op::Transpose: return "transpose";
        case Op::MeanAll: return "mean_all";
        case Op::MeanAxis: return "mean_axis";
        case Op::Sqrt: return "sqrt";
        case Op::Log: return "log";
        case Op::Exp: return "exp";
        case Op::Scale: return "scale";
        case Op::Rfft: return "rfft";
        case Op::Irfft: return "irfft";
        case Op::BinMask: return "bin_mask";
        case Op::RowL2Normalize: return "row_l2_normalize";
        case Op::RepeatRows: return "repeat_rows";
    }
    return "?";
}

NodeId Graph::push(Node n) {
    for (NodeId in : n.inputs) {
        if (in >= nodes_.size())
            shape_error(op_name(n.op), "input reference " + std::to_string(in) + " out of range");
        n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
    }
    exec(n);
    nodes_.push_back(std::move(n));
    forward_cached_ = true;
    return nodes_.size() - 1;
}

NodeId Graph::leaf(Tensor t, std::string label) {
    Node n;
    n.op = Op::Leaf;
    n.needs_grad = t.requires_grad;
    n.value = std::move(t);
    n.label = std::move(label);
    nodes_.push_back(std::move(n));
    forward_cached_ = true;
    return nodes_.size() - 1;
}

Tensor& Graph::leaf_value(NodeId id) {
    if (nodes_[id].op != Op::Leaf) throw std::invalid_argument("leaf_value: node is not a leaf");
    forward_cached_ = false;  // caller may mutate; forward() refreshes downstream values
    return nodes_[id].value;
}

void Graph::check_binary_shapes(const char* op, NodeId a, NodeId b) const {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    if (!ta.same_shape(tb))
        shape_error(op, "shapes " + ta.shape_str() + " and " + tb.shape_str() + " differ");
}

NodeId Graph::add(NodeId a, NodeId b) {
    check_binary_shapes("add", a, b);
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check_binary_shapes("sub", a, b);
    Node n;
    n.op = Op::Sub;
    n.inputs = {a, b};
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check_binary_shapes("mul", a, b);
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = nodes_[a].value;
    const Tensor& tb = nodes_[b].value;
    require_rank_le2("matmul", ta);
    require_rank_le2("matmul", tb);
    if (ta.cols() != tb.rows())
        shape_error("matmul", "shapes " + ta.shape_str() + " and " + tb.shape_str() + " incompatible");
    Node n;
    n.op = Op::MatMul;
    n.inputs = {a, b};
    return push(std::move(n));
}

NodeId Graph::add_rowvec(NodeId x, NodeId bias) {
    const Tensor& tx = nodes_[x].value;
    const Tensor& tb = nodes_[bias].value;
    if (tb.rows() != 1 || tb.cols() != tx.cols())
        shape_error("add_rowvec", "bias " + tb.shape_str() + " does not match columns of " + tx.shape_str());
    Node n;
    n.op = Op::AddRowVec;
    n.inputs = {x, bias};
    return push(std::move(n));
}

NodeId Graph::conv1d(NodeId x, NodeId weight, NodeId bias, std::size_t dilation) {
    const Tensor& tx = nodes_[x].value;
    const Tensor& tw = nodes_[weight].value;
    const Tensor& tb = nodes_[bias].value;
    if (tw.rank() != 3) shape_error("conv1d", "weight must be rank 3, got " + tw.shape_str());
    if (dilation == 0) shape_error("conv1d", "dilation must be >= 1");
    std::size_t c_in = tx.rows();
    if (tw.shape[1] != c_in)
        shape_error("conv1d", "weight " + tw.shape_str() + " does not match input channels of " + tx.shape_str());
    if (tb.numel() != tw.shape[0])
        shape_error("conv1d", "bias " + tb.shape_str() + " does not match output channels " + std::to_string(tw.shape[0]));
    Node n;
    n.op = Op::Conv1d;
    n.inputs = {x, weight, bias};
    n.dilation = dilation;
    return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) {
    Node n;
    n.op = Op::Tanh;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId x) {
    Node n;
    n.op = Op::Sigmoid;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
    Node n;
    n.op = Op::Relu;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::leaky_relu(NodeId x, double slope) {
    Node n;
    n.op = Op::LeakyRelu;
    n.inputs = {x};
    n.scalar = slope;
    return push(std::move(n));
}

NodeId Graph::softmax(NodeId x, int axis) {
    require_rank_le2("softmax", nodes_[x].value);
    if (axis != 0 && axis != 1) shape_error("softmax", "axis must be 0 or 1");
    Node n;
    n.op = Op::Softmax;
    n.inputs = {x};
    n.axis = axis;
    return push(std::move(n));
}

NodeId Graph::layer_norm(NodeId x, double eps) {
    require_rank_le2("layer_norm", nodes_[x].value);
    Node n;
    n.op = Op::LayerNorm;
    n.inputs = {x};
    n.scalar = eps;
    return push(std::move(n));
}

NodeId Graph::dropout(NodeId x, double p, bool train) {
    if (p < 0.0 || p >= 1.0) shape_error("dropout", "p must be in [0, 1)");
    if (!train || p == 0.0) return x;  // identity at inference
    Node n;
    n.op = Op::Dropout;
    n.inputs = {x};
    n.scalar = p;
    n.keep_mask.resize(nodes_[x].value.numel());
    double inv_keep = 1.0 / (1.0 - p);
    for (double& m : n.keep_mask) m = rng_.uniform() < p ? 0.0 : inv_keep;
    return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& parts, int axis) {
    if (parts.empty()) shape_error("concat", "no inputs");
    if (axis != 0 && axis != 1) shape_error("concat", "axis must be 0 or 1");
    const Tensor& first = nodes_[parts[0]].value;
    for (NodeId p : parts) {
        const Tensor& t = nodes_[p].value;
        require_rank_le2("concat", t);
        if (axis == 0 && t.cols() != first.cols())
            shape_error("concat", "column mismatch: " + t.shape_str() + " vs " + first.shape_str());
        if (axis == 1 && t.rows() != first.rows())
            shape_error("concat", "row mismatch: " + t.shape_str() + " vs " + first.shape_str());
    }
    Node n;
    n.op = Op::Concat;
    n.inputs = parts;
    n.axis = axis;
    return push(std::move(n));
}

NodeId Graph::transpose(NodeId x) {
    require_rank_le2("transpose", nodes_[x].value);
    Node n;
    n.op = Op::Transpose;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::mean_all(NodeId x) {
    Node n;
    n.op = Op::MeanAll;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::mean_axis(NodeId x, int axis) {
    require_rank_le2("mean_axis", nodes_[x].value);
    if (axis != 0 && axis != 1) shape_error("mean_axis", "axis must be 0 or 1");
    Node n;
    n.op = Op::MeanAxis;
    n.inputs = {x};
    n.axis = axis;
    return push(std::move(n));
}

NodeId Graph::sqrt(NodeId x) {
    Node n;
    n.op = Op::Sqrt;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::log(NodeId x) {
    Node n;
    n.op = Op::Log;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::exp(NodeId x) {
    Node n;
    n.op = Op::Exp;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::scale(NodeId x, double factor) {
    Node n;
    n.op = Op::Scale;
    n.inputs = {x};
    n.scalar = factor;
    return push(std::move(n));
}

NodeId Graph::rfft(NodeId x) {
    require_rank_le2("rfft", nodes_[x].value);
    if (nodes_[x].value.cols() == 0) shape_error("rfft", "empty input");
    Node n;
    n.op = Op::Rfft;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::irfft(NodeId x, std::size_t length) {
    const Tensor& t = nodes_[x].value;
    require_rank_le2("irfft", t);
    std::size_t bins = length / 2 + 1;
    if (t.cols() != 2 * bins)
        shape_error("irfft", "input " + t.shape_str() + " does not hold " + std::to_string(bins) +
                                 " (re, im) bins for length " + std::to_string(length));
    Node n;
    n.op = Op::Irfft;
    n.inputs = {x};
    n.out_length = length;
    return push(std::move(n));
}

NodeId Graph::bin_mask(NodeId x, std::vector<std::uint8_t> mask) {
    const Tensor& t = nodes_[x].value;
    require_rank_le2("bin_mask", t);
    if (t.cols() % 2 != 0) shape_error("bin_mask", "input columns must be (re, im) pairs");
    if (mask.size() != t.rows() * (t.cols() / 2))
        shape_error("bin_mask", "mask size " + std::to_string(mask.size()) + " does not match " +
                                    t.shape_str());
    Node n;
    n.op = Op::BinMask;
    n.inputs = {x};
    n.mask = std::move(mask);
    return push(std::move(n));
}

NodeId Graph::row_l2_normalize(NodeId x) {
    require_rank_le2("row_l2_normalize", nodes_[x].value);
    Node n;
    n.op = Op::RowL2Normalize;
    n.inputs = {x};
    return push(std::move(n));
}

NodeId Graph::repeat_rows(NodeId x, std::size_t count) {
    const Tensor& t = nodes_[x].value;
    if (t.rows() != 1) shape_error("repeat_rows", "input must have one row, got " + t.shape_str());
    if (count == 0) shape_error("repeat_rows", "count must be >= 1");
    Node n;
    n.op = Op::RepeatRows;
    n.inputs = {x};
    n.out_length = count;
    return push(std::move(n));
}

void Graph::exec(Node& n) {
    auto in = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
    switch (n.op) {
        case Op::Leaf:
            return;
        case Op::Add: {
            const Tensor &a = in(0), &b = in(1);
            n.value.shape = a.shape;
            n.value.values.resize(a.numel());
            for (std::size_t i = 0; i < a.numel(); ++i) n.value.values[i] = a.values[i] + b.values[i];
            return;
        }
        case Op::Sub: {
            const Tensor &a = in(0), &b = in(1);
            n.value.shape = a.shape;
            n.value.values.resize(a.numel());
            for (std::size_t i = 0; i < a.numel(); ++i) n.value.values[i] = a.values[i] - b.values[i];
            return;
        }
        case Op::Mul: {
            const Tensor &a = in(0), &b = in(1);
            n.value.shape = a.shape;
            n.value.values.resize(a.numel());
            for (std::size_t i = 0; i < a.numel(); ++i) n.value.values[i] = a.values[i] * b.values[i];
            return;
        }
        case Op::MatMul: {
            const Tensor &a = in(0), &b = in(1);
            std::size_t m = a.rows(), k = a.cols(), p = b.cols();
            n.value.shape = {m, p};
            n.value.values.assign(m * p, 0.0);
            // ikj order keeps the inner loop contiguous in both b and out
            for (std::size_t i = 0; i < m; ++i) {
                const double* arow = &a.values[i * k];
                double* orow = &n.value.values[i * p];
                for (std::size_t kk = 0; kk < k; ++kk) {
                    double av = arow[kk];
                    if (av == 0.0) continue;
                    const double* brow = &b.values[kk * p];
                    for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
                }
            }
            return;
        }
        case Op::AddRowVec: {
            const Tensor &x = in(0), &b = in(1);
            std::size_t r = x.rows(), c = x.cols();
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    n.value.values[i * c + j] = x.values[i * c + j] + b.values[j];
            return;
        }
        case Op::Conv1d: {
            const Tensor &x = in(0), &w = in(1), &b = in(2);
            std::size_t c_in = x.rows(), len = x.cols();
            std::size_t c_out = w.shape[0], kernel = w.shape[2];
            std::size_t d = n.dilation;
            n.value.shape = {c_out, len};
            n.value.values.resize(c_out * len);
            for (std::size_t o = 0; o < c_out; ++o) {
                double* out = &n.value.values[o * len];
                std::fill(out, out + len, b.values[o]);
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const double* xr = &x.values[ci * len];
                    const double* wr = &w.values[(o * c_in + ci) * kernel];
                    for (std::size_t j = 0; j < kernel; ++j) {
                        // tap offset: kernel index j looks back d*(kernel-1-j) steps
                        std::size_t back = d * (kernel - 1 - j);
                        if (back >= len) continue;
                        double wv = wr[j];
                        for (std::size_t t = back; t < len; ++t) out[t] += wv * xr[t - back];
                    }
                }
            }
            return;
        }
        case Op::Tanh: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i) n.value.values[i] = std::tanh(x.values[i]);
            return;
        }
        case Op::Sigmoid: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i)
                n.value.values[i] = 1.0 / (1.0 + std::exp(-x.values[i]));
            return;
        }
        case Op::Relu: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i)
                n.value.values[i] = x.values[i] > 0.0 ? x.values[i] : 0.0;
            return;
        }
        case Op::LeakyRelu: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i)
                n.value.values[i] = x.values[i] > 0.0 ? x.values[i] : n.scalar * x.values[i];
            return;
        }
        case Op::Softmax: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            std::size_t r = x.rows(), c = x.cols();
            std::size_t outer = n.axis == 1 ? r : c;
            std::size_t inner = n.axis == 1 ? c : r;
            auto idx = [&](std::size_t o, std::size_t i) {
                return n.axis == 1 ? o * c + i : i * c + o;
            };
            for (std::size_t o = 0; o < outer; ++o) {
                double mx = x.values[idx(o, 0)];
                for (std::size_t i = 1; i < inner; ++i) mx = std::max(mx, x.values[idx(o, i)]);
                double sum = 0.0;
                for (std::size_t i = 0; i < inner; ++i) {
                    double e = std::exp(x.values[idx(o, i)] - mx);
                    n.value.values[idx(o, i)] = e;
                    sum += e;
                }
                for (std::size_t i = 0; i < inner; ++i) n.value.values[idx(o, i)] /= sum;
            }
            return;
        }
        case Op::LayerNorm: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            std::size_t r = x.rows(), c = x.cols();
            for (std::size_t i = 0; i < r; ++i) {
                const double* xr = &x.values[i * c];
                double* yr = &n.value.values[i * c];
                double mu = 0.0;
                for (std::size_t j = 0; j < c; ++j) mu += xr[j];
                mu /= static_cast<double>(c);
                double var = 0.0;
                for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
                var /= static_cast<double>(c);
                double inv = 1.0 / std::sqrt(var + n.scalar);
                for (std::size_t j = 0; j < c; ++j) yr[j] = (xr[j] - mu) * inv;
            }
            return;
        }
        case Op::Dropout: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i)
                n.value.values[i] = x.values[i] * n.keep_mask[i];
            return;
        }
        case Op::Concat: {
            if (n.axis == 0) {
                std::size_t c = in(0).cols(), r = 0;
                for (NodeId p : n.inputs) r += nodes_[p].value.rows();
                n.value.shape = {r, c};
                n.value.values.clear();
                n.value.values.reserve(r * c);
                for (NodeId p : n.inputs) {
                    const auto& v = nodes_[p].value.values;
                    n.value.values.insert(n.value.values.end(), v.begin(), v.end());
                }
            } else {
                std::size_t r = in(0).rows(), c = 0;
                for (NodeId p : n.inputs) c += nodes_[p].value.cols();
                n.value.shape = {r, c};
                n.value.values.resize(r * c);
                std::size_t off = 0;
                for (NodeId p : n.inputs) {
                    const Tensor& t = nodes_[p].value;
                    for (std::size_t i = 0; i < r; ++i)
                        std::copy(&t.values[i * t.cols()], &t.values[(i + 1) * t.cols()],
                                  &n.value.values[i * c + off]);
                    off += t.cols();
                }
            }
            return;
        }
        case Op::Transpose: {
            const Tensor& x = in(0);
            std::size_t r = x.rows(), c = x.cols();
            n.value.shape = {c, r};
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) n.value.values[j * r + i] = x.values[i * c + j];
            return;
        }
        case Op::MeanAll: {
            const Tensor& x = in(0);
            double s = 0.0;
            for (double v : x.values) s += v;
            n.value.shape = {1};
            n.value.values = {s / static_cast<double>(x.numel())};
            return;
        }
        case Op::MeanAxis: {
            const Tensor& x = in(0);
            std::size_t r = x.rows(), c = x.cols();
            if (n.axis == 0) {
                n.value.shape = {1, c};
                n.value.values.assign(c, 0.0);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) n.value.values[j] += x.values[i * c + j];
                for (double& v : n.value.values) v /= static_cast<double>(r);
            } else {
                n.value.shape = {r, 1};
                n.value.values.assign(r, 0.0);
                for (std::size_t i = 0; i < r; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < c; ++j) s += x.values[i * c + j];
                    n.value.values[i] = s / static_cast<double>(c);
                }
            }
            return;
        }
        case Op::Sqrt: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i) n.value.values[i] = std::sqrt(x.values[i]);
            return;
        }
        case Op::Log: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i) n.value.values[i] = std::log(x.values[i]);
            return;
        }
        case Op::Exp: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i) n.value.values[i] = std::exp(x.values[i]);
            return;
        }
        case Op::Scale: {
            const Tensor& x = in(0);
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < x.numel(); ++i) n.value.values[i] = n.scalar * x.values[i];
            return;
        }
        case Op::Rfft: {
            const Tensor& x = in(0);
            std::size_t ch = x.rows(), len = x.cols();
            std::size_t bins = len / 2 + 1;
            const std::vector<double>& tw = twiddle_table(len);
            n.value.shape = {ch, 2 * bins};
            n.value.values.assign(ch * 2 * bins, 0.0);
            for (std::size_t c = 0; c < ch; ++c) {
                const double* xr = &x.values[c * len];
                double* out = &n.value.values[c * 2 * bins];
                for (std::size_t b = 0; b < bins; ++b) {
                    const double* w = &tw[b * len * 2];
                    double re = 0.0, im = 0.0;
                    for (std::size_t t = 0; t < len; ++t) {
                        re += xr[t] * w[2 * t];
                        im -= xr[t] * w[2 * t + 1];
                    }
                    out[2 * b] = re;
                    out[2 * b + 1] = im;
                }
            }
            return;
        }
        case Op::Irfft: {
            const Tensor& x = in(0);
            std::size_t ch = x.rows(), len = n.out_length;
            std::size_t bins = len / 2 + 1;
            const std::vector<double>& tw = twiddle_table(len);
            n.value.shape = {ch, len};
            n.value.values.assign(ch * len, 0.0);
            for (std::size_t c = 0; c < ch; ++c) {
                const double* spec = &x.values[c * 2 * bins];
                double* out = &n.value.values[c * len];
                for (std::size_t b = 0; b < bins; ++b) {
                    // DC and (even-length) Nyquist bins appear once, the rest twice
                    double wgt = (b == 0 || (len % 2 == 0 && b == len / 2)) ? 1.0 : 2.0;
                    double re = wgt / static_cast<double>(len) * spec[2 * b];
                    double im = wgt / static_cast<double>(len) * spec[2 * b + 1];
                    const double* w = &tw[b * len * 2];
                    for (std::size_t t = 0; t < len; ++t)
                        out[t] += re * w[2 * t] - im * w[2 * t + 1];
                }
            }
            return;
        }
        case Op::BinMask: {
            const Tensor& x = in(0);
            std::size_t ch = x.rows(), bins = x.cols() / 2;
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t b = 0; b < bins; ++b) {
                    double keep = n.mask[c * bins + b] ? 1.0 : 0.0;
                    n.value.values[(c * bins + b) * 2] = keep * x.values[(c * bins + b) * 2];
                    n.value.values[(c * bins + b) * 2 + 1] = keep * x.values[(c * bins + b) * 2 + 1];
                }
            return;
        }
        case Op::RowL2Normalize: {
            const Tensor& x = in(0);
            std::size_t r = x.rows(), c = x.cols();
            n.value.shape = x.shape;
            n.value.values.resize(x.numel());
            for (std::size_t i = 0; i < r; ++i) {
                double ss = 0.0;
                for (std::size_t j = 0; j < c; ++j) ss += x.values[i * c + j] * x.values[i * c + j];
                double norm = std::sqrt(ss);
                double inv = norm > 0.0 ? 1.0 / norm : 0.0;  // zero rows stay zero
                for (std::size_t j = 0; j < c; ++j) n.value.values[i * c + j] = x.values[i * c + j] * inv;
            }
            return;
        }
        case Op::RepeatRows: {
            const Tensor& x = in(0);
            std::size_t c = x.cols(), m = n.out_length;
            n.value.shape = {m, c};
            n.value.values.resize(m * c);
            for (std::size_t i = 0; i < m; ++i)
                std::copy(x.values.begin(), x.values.end(), n.value.values.begin() + i * c);
            return;
        }
    }
}

const Tensor& Graph::forward() {
    if (nodes_.empty()) throw std::logic_error("forward: empty graph");
    for (Node& n : nodes_)
        if (n.op != Op::Leaf) exec(n);
    forward_cached_ = true;
    return nodes_.back().value;
}

void Graph::backward() {
    if (nodes_.empty()) throw std::logic_error("backward: empty graph");
    const Tensor& out = nodes_.back().value;
    if (out.numel() != 1)
        throw std::invalid_argument("backward: default seed requires scalar output, got " +
                                    out.shape_str());
    Tensor seed = out;
    seed.values = {1.0};
    backward(seed);
}

void Graph::backward(const Tensor& seed) {
    if (nodes_.empty()) throw std::logic_error("backward: empty graph");
    if (!forward_cached_) throw std::logic_error("backward: forward cache absent, run forward() first");
    if (!seed.same_shape(nodes_.back().value))
        throw std::invalid_argument("backward: seed shape " + seed.shape_str() +
                                    " does not match output " + nodes_.back().value.shape_str());
    for (Node& n : nodes_) {
        if (n.needs_grad)
            n.adjoint.assign(n.value.numel(), 0.0);
        else
            n.adjoint.clear();
    }
    if (!nodes_.back().needs_grad) return;  // nothing below requires gradients
    nodes_.back().adjoint = seed.values;

    for (std::size_t id = nodes_.size(); id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.needs_grad || n.op == Op::Leaf) continue;
        const std::vector<double>& g = n.adjoint;
        auto input = [&](std::size_t i) -> Node& { return nodes_[n.inputs[i]]; };
        auto wants = [&](std::size_t i) { return nodes_[n.inputs[i]].needs_grad; };

        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add: {
                for (std::size_t i = 0; i < 2; ++i)
                    if (wants(i)) {
                        auto& adj = input(i).adjoint;
                        for (std::size_t k = 0; k < g.size(); ++k) adj[k] += g[k];
                    }
                break;
            }
            case Op::Sub: {
                if (wants(0)) {
                    auto& adj = input(0).adjoint;
                    for (std::size_t k = 0; k < g.size(); ++k) adj[k] += g[k];
                }
                if (wants(1)) {
                    auto& adj = input(1).adjoint;
                    for (std::size_t k = 0; k < g.size(); ++k) adj[k] -= g[k];
                }
                break;
            }
            case Op::Mul: {
                const auto& a = input(0).value.values;
                const auto& b = input(1).value.values;
                if (wants(0)) {
                    auto& adj = input(0).adjoint;
                    for (std::size_t k = 0; k < g.size(); ++k) adj[k] += g[k] * b[k];
                }
                if (wants(1)) {
                    auto& adj = input(1).adjoint;
                    for (std::size_t k = 0; k < g.size(); ++k) adj[k] += g[k] * a[k];
                }
                break;
            }
            case Op::MatMul: {
                const Tensor& a = input(0).value;
                const Tensor& b = input(1).value;
                std::size_t m = a.rows(), k = a.cols(), p = b.cols();
                if (wants(0)) {  // dA += G B^T
                    auto& adj = input(0).adjoint;
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            double s = 0.0;
                            const double* grow = &g[i * p];
                            const double* brow = &b.values[kk * p];
                            for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
                            adj[i * k + kk] += s;
                        }
                }
                if (wants(1)) {  // dB += A^T G
                    auto& adj = input(1).adjoint;
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* arow = &a.values[i * k];
                        const double* grow = &g[i * p];
                        for (std::size_t kk = 0; kk < k; ++kk) {
                            double av = arow[kk];
                            if (av == 0.0) continue;
                            double* adjrow = &adj[kk * p];
                            for (std::size_t j = 0; j < p; ++j) adjrow[j] += av * grow[j];
                        }
                    }
                }
                break;
            }
            case Op::AddRowVec: {
                std::size_t r = input(0).value.rows(), c = input(0).value.cols();
                if (wants(0)) {
                    auto& adj = input(0).adjoint;
                    for (std::size_t k = 0; k < g.size(); ++k) adj[k] += g[k];
                }
                if (wants(1)) {
                    auto& adj = input(1).adjoint;
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) adj[j] += g[i * c + j];
                }
                break;
            }
            case Op::Conv1d: {
                const Tensor& x = input(0).value;
                const Tensor& w = input(1).value;
                std::size_t c_in = x.rows(), len = x.cols();
                std::size_t c_out = w.shape[0], kernel = w.shape[2];
                std::size_t d = n.dilation;
                if (wants(0)) {
                    auto& adj = input(0).adjoint;
                    for (std::size_t o = 0; o < c_out; ++o) {
                        const double* grow = &g[o * len];
                        for (std::size_t ci = 0; ci < c_in; ++ci) {
                            double* xadj = &adj[ci * len];
                            const double* wr = &w.values[(o * c_in + ci) * kernel];
                            for (std::size_t j = 0; j < kernel; ++j) {
                                std::size_t back = d * (kernel - 1 - j);
                                if (back >= len) continue;
                                double wv = wr[j];
                                for (std::size_t t = back; t < len; ++t) xadj[t - back] += wv * grow[t];
                            }
                        }
                    }
                }
                if (wants(1)) {
                    auto& adj = input(1).adjoint;
                    for (std::size_t o = 0; o < c_out; ++o) {
                        const double* grow = &g[o * len];
                        for (std::size_t ci = 0; ci < c_in; ++ci) {
                            const double* xr = &x.values[ci * len];
                            double* wadj = &adj[(o * c_in + ci) * kernel];
                            for (std::size_t j = 0; j < kernel; ++j) {
                                std::size_t back = d * (kernel - 1 - j);
                                if (back >= len) continue;
                                double s = 0.0;
                                for (std::size_t t = back; t < len; ++t) s += grow[t] * xr[t - back];
                                wadj[j] += s;
                            }
                        }
                    }
                }
                if (wants(2)) {
                    auto& adj = input(2).adjoint;
                    for (std::size_t o = 0; o < c_out; ++o) {
                        double s = 0.0;
                        const double* grow = &g[o * len];
                        for (std::size_t t = 0; t < len; ++t) s += grow[t];
                        adj[o] += s;
                    }
                }
                break;
            }
            case Op::Tanh: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                for (std::size_t k = 0; k < g.size(); ++k) {
                    double y = n.value.values[k];
                    adj[k] += g[k] * (1.0 - y * y);
                }
                break;
            }
            case Op::Sigmoid: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                for (std::size_t k = 0; k < g.size(); ++k) {
                    double y = n.value.values[k];
                    adj[k] += g[k] * y * (1.0 - y);
                }
                break;
            }
            case Op::Relu: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                const auto& x = input(0).value.values;
                for (std::size_t k = 0; k < g.size(); ++k) adj[k] += x[k] > 0.0 ? g[k] : 0.0;
                break;
            }
            case Op::LeakyRelu: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                const auto& x = input(0).value.values;
                for (std::size_t k = 0; k < g.size(); ++k)
                    adj[k] += x[k] > 0.0 ? g[k] : n.scalar * g[k];
                break;
            }
            case Op::Softmax: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                const Tensor& y = n.value;
                std::size_t r = y.rows(), c = y.cols();
                std::size_t outer = n.axis == 1 ? r : c;
                std::size_t inner = n.axis == 1 ? c : r;
                auto idx = [&](std::size_t o, std::size_t i) {
                    return n.axis == 1 ? o * c + i : i * c + o;
                };
                for (std::size_t o = 0; o < outer; ++o) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < inner; ++i) dot += g[idx(o, i)] * y.values[idx(o, i)];
                    for (std::size_t i = 0; i < inner; ++i)
                        adj[idx(o, i)] += y.values[idx(o, i)] * (g[idx(o, i)] - dot);
                }
                break;
            }
            case Op::LayerNorm: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                const Tensor& x = input(0).value;
                std::size_t r = x.rows(), c = x.cols();
                double cn = static_cast<double>(c);
                for (std::size_t i = 0; i < r; ++i) {
                    const double* xr = &x.values[i * c];
                    const double* yr = &n.value.values[i * c];
                    const double* gr = &g[i * c];
                    double mu = 0.0;
                    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
                    mu /= cn;
                    double var = 0.0;
                    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
                    var /= cn;
                    double inv = 1.0 / std::sqrt(var + n.scalar);
                    double gsum = 0.0, gysum = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        gsum += gr[j];
                        gysum += gr[j] * yr[j];
                    }
                    for (std::size_t j = 0; j < c; ++j)
                        adj[i * c + j] += (inv / cn) * (cn * gr[j] - gsum - yr[j] * gysum);
                }
                break;
            }
            case Op::Dropout: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                for (std::size_t k = 0; k < g.size(); ++k) adj[k] += g[k] * n.keep_mask[k];
                break;
            }
            case Op::Concat: {
                if (n.axis == 0) {
                    std::size_t off = 0;
                    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                        std::size_t cnt = input(i).value.numel();
                        if (wants(i)) {
                            auto& adj = input(i).adjoint;
                            for (std::size_t k = 0; k < cnt; ++k) adj[k] += g[off + k];
                        }
                        off += cnt;
                    }
                } else {
                    std::size_t r = n.value.rows(), c = n.value.cols();
                    std::size_t off = 0;
                    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                        std::size_t ci = input(i).value.cols();
                        if (wants(i)) {
                            auto& adj = input(i).adjoint;
                            for (std::size_t rr = 0; rr < r; ++rr)
                                for (std::size_t j = 0; j < ci; ++j)
                                    adj[rr * ci + j] += g[rr * c + off + j];
                        }
                        off += ci;
                    }
                }
                break;
            }
            case Op::Transpose: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                std::size_t r = input(0).value.rows(), c = input(0).value.cols();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) adj[i * c + j] += g[j * r + i];
                break;
            }
            case Op::MeanAll: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                double gv = g[0] / static_cast<double>(adj.size());
                for (double& a : adj) a += gv;
                break;
            }
            case Op::MeanAxis: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                std::size_t r = input(0).value.rows(), c = input(0).value.cols();
                if (n.axis == 0) {
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            adj[i * c + j] += g[j] / static_cast<double>(r);
                } else {
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            adj[i * c + j] += g[i] / static_cast<double>(c);
                }
                break;
            }
            case Op::Sqrt: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                for (std::size_t k = 0; k < g.size(); ++k) {
                    double y = n.value.values[k];
                    adj[k] += y > 0.0 ? g[k] / (2.0 * y) : 0.0;  // subgradient 0 at the kink
                }
                break;
            }
            case Op::Log: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                const auto& x = input(0).value.values;
                for (std::size_t k = 0; k < g.size(); ++k) adj[k] += g[k] / x[k];
                break;
            }
            case Op::Exp: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                for (std::size_t k = 0; k < g.size(); ++k) adj[k] += g[k] * n.value.values[k];
                break;
            }
            case Op::Scale: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                for (std::size_t k = 0; k < g.size(); ++k) adj[k] += n.scalar * g[k];
                break;
            }
            case Op::Rfft: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                std::size_t ch = input(0).value.rows(), len = input(0).value.cols();
                std::size_t bins = len / 2 + 1;
                const std::vector<double>& tw = twiddle_table(len);
                for (std::size_t c = 0; c < ch; ++c) {
                    const double* gs = &g[c * 2 * bins];
                    double* xa = &adj[c * len];
                    for (std::size_t b = 0; b < bins; ++b) {
                        double gre = gs[2 * b], gim = gs[2 * b + 1];
                        const double* w = &tw[b * len * 2];
                        for (std::size_t t = 0; t < len; ++t)
                            xa[t] += gre * w[2 * t] - gim * w[2 * t + 1];
                    }
                }
                break;
            }
            case Op::Irfft: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                std::size_t ch = n.value.rows(), len = n.out_length;
                std::size_t bins = len / 2 + 1;
                const std::vector<double>& tw = twiddle_table(len);
                for (std::size_t c = 0; c < ch; ++c) {
                    const double* gt = &g[c * len];
                    double* sa = &adj[c * 2 * bins];
                    for (std::size_t b = 0; b < bins; ++b) {
                        double wgt = (b == 0 || (len % 2 == 0 && b == len / 2)) ? 1.0 : 2.0;
                        double dre = 0.0, dim = 0.0;
                        const double* w = &tw[b * len * 2];
                        for (std::size_t t = 0; t < len; ++t) {
                            dre += gt[t] * w[2 * t];
                            dim -= gt[t] * w[2 * t + 1];
                        }
                        sa[2 * b] += (wgt / static_cast<double>(len)) * dre;
                        sa[2 * b + 1] += (wgt / static_cast<double>(len)) * dim;
                    }
                }
                break;
            }
            case Op::BinMask: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                std::size_t ch = n.value.rows(), bins = n.value.cols() / 2;
                for (std::size_t c = 0; c < ch; ++c)
                    for (std::size_t b = 0; b < bins; ++b)
                        if (n.mask[c * bins + b]) {
                            adj[(c * bins + b) * 2] += g[(c * bins + b) * 2];
                            adj[(c * bins + b) * 2 + 1] += g[(c * bins + b) * 2 + 1];
                        }
                // masked bins receive exactly zero gradient
                break;
            }
            case Op::RowL2Normalize: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                const Tensor& x = input(0).value;
                std::size_t r = x.rows(), c = x.cols();
                for (std::size_t i = 0; i < r; ++i) {
                    double ss = 0.0;
                    for (std::size_t j = 0; j < c; ++j) ss += x.values[i * c + j] * x.values[i * c + j];
                    double norm = std::sqrt(ss);
                    if (norm == 0.0) continue;
                    const double* yr = &n.value.values[i * c];
                    const double* gr = &g[i * c];
                    double dot = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
                    for (std::size_t j = 0; j < c; ++j)
                        adj[i * c + j] += (gr[j] - yr[j] * dot) / norm;
                }
                break;
            }
            case Op::RepeatRows: {
                if (!wants(0)) break;
                auto& adj = input(0).adjoint;
                std::size_t c = input(0).value.cols();
                for (std::size_t i = 0; i < n.out_length; ++i)
                    for (std::size_t j = 0; j < c; ++j) adj[j] += g[i * c + j];
                break;
            }
        }
    }

    for (Node& n : nodes_)
        if (n.op == Op::Leaf && n.value.requires_grad) n.value.grad = n.adjoint;
}

const std::vector<double>& Graph::grad(NodeId id) const { return nodes_[id].adjoint; }

std::vector<NodeId> Graph::param_nodes() const {
    std::vector<NodeId> out;
    for (NodeId i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].op == Op::Leaf && nodes_[i].value.requires_grad) out.push_back(i);
    return out;
}

}  // namespace contrastad::diff
