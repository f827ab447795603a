#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskdiff/tensor.hpp"

namespace maskdiff {

// Reverse-mode differentiation over the closed op set the denoiser needs.
// Define-by-run: each op evaluates eagerly and records a node on the tape.
// Not a general autodiff; every backward rule here is covered by the
// finite-difference suite in the tests.
class Tape {
  public:
    using NodeId = int;

    enum class Op {
        Leaf,       // trainable parameter
        Constant,   // non-trainable input
        MatMul,     // a(r,k) * b(k,c)
        Add,        // elementwise, same shape
        AddRow,     // a(r,c) + broadcast row vector b(1,c)
        Tanh,
        RowSoftmax,  // max-subtracted softmax per row
        GatherRows,  // rows of a table selected by integer ids
        MaskedCE,    // weight * sum over masked rows of -log softmax(logits)[target]
        Scale,       // a * scalar_arg
        Sum,         // scalar sum of all entries
        StopGrad,    // identity forward, zero backward
    };

    NodeId leaf(Tensor value, std::string name);
    NodeId constant(Tensor value, std::string name = "");

    NodeId matmul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId add_row(NodeId a, NodeId row);
    NodeId tanh_op(NodeId a);
    NodeId row_softmax(NodeId a);
    NodeId gather_rows(NodeId table, std::vector<int> ids);
    NodeId masked_cross_entropy(NodeId logits, std::vector<int> targets,
                                std::vector<uint8_t> row_mask, double weight);
    NodeId scale(NodeId a, double factor);
    NodeId sum(NodeId a);
    NodeId stop_gradient(NodeId a);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    Tensor& mutable_value(NodeId id) { return nodes_[id].value; }

    // Accumulates gradients into every node reachable from `output`, stopping
    // at StopGrad boundaries. `output` must be scalar.
    void backward(NodeId output, double seed = 1.0);

    // Gradient of the last backward() w.r.t. a node. Zero tensor if no
    // gradient reached it.
    Tensor gradient(NodeId id) const;

    void zero_gradients();

    // Recomputes forward values from the current leaf/constant contents and
    // returns the (scalar) value of `output`. With freeze_stop_grad set,
    // StopGrad nodes keep their previously computed value, which matches the
    // semantics of differentiating with the detached value held constant.
    double reeval_scalar(NodeId output, bool freeze_stop_grad);

    size_t node_count() const { return nodes_.size(); }
    bool is_leaf(NodeId id) const { return nodes_[id].op == Op::Leaf; }
    const std::string& node_name(NodeId id) const { return nodes_[id].name; }

    std::vector<NodeId> leaf_ids() const;

    bool backward_has_run() const { return backward_ran_; }

  private:
    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        Tensor value;
        Tensor grad;
        bool grad_alloc = false;
        std::vector<int> ids;         // GatherRows indices / MaskedCE targets
        std::vector<uint8_t> mask;    // MaskedCE row mask
        double scalar_arg = 0.0;      // Scale factor / MaskedCE weight
        std::string name;
    };

    NodeId push(Node n);
    void eval_node(Node& n);
    void backward_node(int idx);
    Tensor& grad_of(int idx);
    void check_finite(const Node& n) const;

    std::vector<Node> nodes_;
    bool backward_ran_ = false;
};

struct GradCheckReport {
    bool pass = false;
    double max_rel_error = 0.0;
    int checked = 0;
    std::string worst_leaf;
};

// Central finite differences (step 1e-5) against the tape's analytic
// gradients, over every leaf element. Output must be scalar. StopGrad values
// are held frozen during re-evaluation, i.e. the function being
// differentiated treats detached values as constants.
GradCheckReport grad_check(Tape& tape, Tape::NodeId output, double tolerance,
                           double fd_step = 1e-5);

}  // namespace maskdiff
