#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "contrastad/rng.hpp"
#include "contrastad/tensor.hpp"

namespace contrastad::diff {

using NodeId = std::size_t;

enum class Op {
    Leaf,
    Add,
    Sub,
    Mul,
    MatMul,
    AddRowVec,
    Conv1d,
    Tanh,
    Sigmoid,
    Relu,
    LeakyRelu,
    Softmax,
    LayerNorm,
    Dropout,
    Concat,
    Transpose,
    MeanAll,
    MeanAxis,
    Sqrt,
    Log,
    Exp,
    Scale,
    Rfft,
    Irfft,
    BinMask,
    RowL2Normalize,
    RepeatRows,
};

const char* op_name(Op op);

struct Node {
    Op op = Op::Leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    std::vector<double> adjoint;  // allocated during backward
    bool needs_grad = false;
    std::string label;

    // op attributes
    int axis = 1;
    std::size_t dilation = 1;
    double scalar = 0.0;             // scale factor / leaky slope / dropout p
    std::size_t out_length = 0;      // irfft target length / repeat_rows count
    std::vector<std::uint8_t> mask;  // bin mask, one byte per (channel, bin)
    std::vector<double> keep_mask;   // dropout keep mask, pre-scaled by 1/(1-p)
};

// Reverse-mode computation trace. Nodes are appended in topological order and
// evaluated eagerly, so shapes fail fast at build time. forward() re-executes
// the whole trace from current leaf values (dropout masks and FFT bin masks
// stay frozen), which is what the finite-difference checker relies on.
class Graph {
   public:
    explicit Graph(std::uint64_t dropout_seed = 0) : rng_(dropout_seed) {}

    NodeId leaf(Tensor t, std::string label = "");

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    // adds a length-n row vector to every row of an m x n matrix
    NodeId add_rowvec(NodeId x, NodeId bias);
    // causal 1-d convolution, stride 1, left zero padding of dilation*(kernel-1)
    NodeId conv1d(NodeId x, NodeId weight, NodeId bias, std::size_t dilation = 1);
    NodeId tanh(NodeId x);
    NodeId sigmoid(NodeId x);
    NodeId relu(NodeId x);
    NodeId leaky_relu(NodeId x, double slope = 0.01);
    // axis 1: each row sums to one; axis 0: each column sums to one
    NodeId softmax(NodeId x, int axis = 1);
    NodeId layer_norm(NodeId x, double eps = 1e-5);
    // train mode draws a Bernoulli keep mask (scaled by 1/(1-p)) from the graph
    // seed at build time; inference mode is the identity
    NodeId dropout(NodeId x, double p, bool train);
    NodeId concat(const std::vector<NodeId>& parts, int axis);
    NodeId transpose(NodeId x);
    NodeId mean_all(NodeId x);
    NodeId mean_axis(NodeId x, int axis);
    NodeId sqrt(NodeId x);
    NodeId log(NodeId x);
    NodeId exp(NodeId x);
    NodeId scale(NodeId x, double factor);
    // real DFT along the last axis: (C x L) -> (C x 2B), B = floor(L/2)+1,
    // rows hold interleaved (re, im) pairs
    NodeId rfft(NodeId x);
    // inverse of rfft back to (C x L)
    NodeId irfft(NodeId x, std::size_t length);
    // zeroes the (re, im) pair of every bin whose mask byte is 0; mask has one
    // byte per (channel, bin) and is frozen into the node
    NodeId bin_mask(NodeId x, std::vector<std::uint8_t> mask);
    // rows scaled to unit L2 norm; zero rows stay zero
    NodeId row_l2_normalize(NodeId x);
    NodeId repeat_rows(NodeId x, std::size_t count);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    Tensor& leaf_value(NodeId id);
    const Node& node(NodeId id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    NodeId last() const { return nodes_.size() - 1; }

    // re-executes every node in order; returns the final node's value
    const Tensor& forward();
    // seeds the final node and propagates adjoints in reverse topological
    // order; fills Tensor::grad on every requires_grad leaf
    void backward();
    void backward(const Tensor& seed);
    const std::vector<double>& grad(NodeId id) const;
    std::vector<NodeId> param_nodes() const;

   private:
    NodeId push(Node n);
    void exec(Node& n);
    void check_binary_shapes(const char* op, NodeId a, NodeId b) const;

    std::vector<Node> nodes_;
    Rng rng_;
    bool forward_cached_ = false;
};

}  // namespace contrastad::diff
