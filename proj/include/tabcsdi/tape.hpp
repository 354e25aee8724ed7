#pragma once

#include <functional>
#include <vector>

#include "tabcsdi/tensor.hpp"

namespace tabcsdi {

// Reverse-mode tape over the primitive set needed by the denoiser. Nodes are
// recorded in construction order, which is a topological order of the graph,
// so the backward pass is a single reverse sweep. A tape is built per training
// step and discarded; parameters live outside (see optim.hpp) and are bound as
// leaves with needs_grad = true.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad; // allocated on first accumulation during backward
        bool needs_grad = false;
        std::vector<int> parents;
        std::function<void(Tape&, int)> backward; // empty for leaves
        const char* op = "leaf";
    };

    int leaf(Tensor value, bool needs_grad = false);

    // [..., m, k] x [k, n]         -> [..., m, n]   (2-D rhs applied per slice)
    // [..., m, k] x [..., k, n]    -> [..., m, n]   (matching leading dims)
    int matmul(int a, int b);

    // NumPy-style broadcasting on both operands.
    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);

    int scale(int a, real_t s);
    int silu(int a);
    int softmax_lastdim(int a);

    // Normalizes over the last axis; gamma/beta are 1-D of that width.
    int layer_norm(int a, int gamma, int beta, real_t eps = real_t(1e-5));

    int reshape(int a, std::vector<int> shape);
    int transpose(int a, int ax0, int ax1);
    int concat_lastdim(const std::vector<int>& parts);

    // table [rows, e] gathered by index vector -> [n, e]
    int embedding_lookup(int table, std::vector<int> indices);

    // sum((pred - target)^2 * mask) / sum(mask) -> scalar. target/mask are
    // constants; errors if mask sums to zero.
    int masked_mse(int pred, const Tensor& target, const Tensor& mask);

    // Runs adjoint accumulation from a scalar loss node back to the leaves.
    void backward(int loss);

    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor& val(int id) { return nodes_[static_cast<size_t>(id)].value; }

    // Valid after backward(); zero tensor if the node never received adjoints.
    const Tensor& grad(int id);

    bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
    size_t size() const { return nodes_.size(); }

private:
    friend struct TapeOps;
    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    int push(Node n);
    void accumulate(int id, const Tensor& g);
    void accumulate_scaled(int id, const Tensor& g, real_t s);

    std::vector<Node> nodes_;
    Tensor zero_ = Tensor::scalar(0);
};

// Plain-tensor kernels shared by forward and backward paths.
namespace kernels {

// C += A (m x k) @ B (k x n), row-major, deterministic row partitioning.
void gemm_acc(real_t* C, const real_t* A, const real_t* B, int m, int k, int n);
Tensor transpose2d(const Tensor& a, int rows, int cols);

// Broadcast shape of two shapes under NumPy rules; fails if incompatible.
std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b, const char* op);

// Reduce-sums g (shaped like `from`) down to shape `to` (summing broadcast axes).
Tensor reduce_to_shape(const Tensor& g, const std::vector<int>& to);

} // namespace kernels

} // namespace tabcsdi
