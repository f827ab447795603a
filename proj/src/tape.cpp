#include "maskdiff/tape.hpp"

#include <algorithm>
#include <cmath>

#include "maskdiff/errors.hpp"

namespace maskdiff {

namespace {

const char* op_name(Tape::Op op) {
    switch (op) {
        case Tape::Op::Leaf: return "leaf";
        case Tape::Op::Constant: return "constant";
        case Tape::Op::MatMul: return "matmul";
        case Tape::Op::Add: return "add";
        case Tape::Op::AddRow: return "add_row";
        case Tape::Op::Tanh: return "tanh";
        case Tape::Op::RowSoftmax: return "row_softmax";
        case Tape::Op::GatherRows: return "gather_rows";
        case Tape::Op::MaskedCE: return "masked_cross_entropy";
        case Tape::Op::Scale: return "scale";
        case Tape::Op::Sum: return "sum";
        case Tape::Op::StopGrad: return "stop_gradient";
    }
    return "?";
}

// c += a * b
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const int r = a.rows, k = a.cols, cc = b.cols;
    for (int i = 0; i < r; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * k];
        double* crow = &c.data[static_cast<size_t>(i) * cc];
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(p) * cc];
            for (int j = 0; j < cc; ++j) crow[j] += av * brow[j];
        }
    }
}

// c += a^T * b  (a is r x k, b is r x c, result k x c)
void matmul_at_b_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const int r = a.rows, k = a.cols, cc = b.cols;
    for (int i = 0; i < r; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * k];
        const double* brow = &b.data[static_cast<size_t>(i) * cc];
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = &c.data[static_cast<size_t>(p) * cc];
            for (int j = 0; j < cc; ++j) crow[j] += av * brow[j];
        }
    }
}

// c += a * b^T  (a is r x k, b is c x k, result r x c)
void matmul_a_bt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const int r = a.rows, k = a.cols, cc = b.rows;
    for (int i = 0; i < r; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * k];
        double* crow = &c.data[static_cast<size_t>(i) * cc];
        for (int j = 0; j < cc; ++j) {
            const double* brow = &b.data[static_cast<size_t>(j) * k];
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

void softmax_rows(const Tensor& in, Tensor& out) {
    for (int i = 0; i < in.rows; ++i) {
        const double* x = &in.data[static_cast<size_t>(i) * in.cols];
        double* y = &out.data[static_cast<size_t>(i) * in.cols];
        double m = x[0];
        for (int j = 1; j < in.cols; ++j) m = std::max(m, x[j]);
        double z = 0.0;
        for (int j = 0; j < in.cols; ++j) {
            y[j] = std::exp(x[j] - m);
            z += y[j];
        }
        for (int j = 0; j < in.cols; ++j) y[j] /= z;
    }
}

}  // namespace

Tape::NodeId Tape::push(Node n) {
    eval_node(n);
    check_finite(n);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::check_finite(const Node& n) const {
    if (!n.value.all_finite()) {
        throw NumericError(std::string("non-finite value produced by node ") +
                           op_name(n.op) + (n.name.empty() ? "" : " '" + n.name + "'") +
                           " at index " + std::to_string(nodes_.size()));
    }
}

Tape::NodeId Tape::leaf(Tensor value, std::string name) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.name = std::move(name);
    return push(std::move(n));
}

Tape::NodeId Tape::constant(Tensor value, std::string name) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(value);
    n.name = std::move(name);
    return push(std::move(n));
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    if (nodes_[a].value.cols != nodes_[b].value.rows) {
        throw ConfigError("matmul shape mismatch: " +
                          std::to_string(nodes_[a].value.cols) + " vs " +
                          std::to_string(nodes_[b].value.rows));
    }
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    if (!nodes_[a].value.same_shape(nodes_[b].value)) {
        throw ConfigError("add shape mismatch");
    }
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    return push(std::move(n));
}

Tape::NodeId Tape::add_row(NodeId a, NodeId row) {
    if (nodes_[row].value.rows != 1 || nodes_[row].value.cols != nodes_[a].value.cols) {
        throw ConfigError("add_row expects a 1xC bias matching the matrix width");
    }
    Node n;
    n.op = Op::AddRow;
    n.a = a;
    n.b = row;
    return push(std::move(n));
}

Tape::NodeId Tape::tanh_op(NodeId a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    return push(std::move(n));
}

Tape::NodeId Tape::row_softmax(NodeId a) {
    Node n;
    n.op = Op::RowSoftmax;
    n.a = a;
    return push(std::move(n));
}

Tape::NodeId Tape::gather_rows(NodeId table, std::vector<int> ids) {
    const Tensor& t = nodes_[table].value;
    for (int id : ids) {
        if (id < 0 || id >= t.rows) throw ConfigError("gather_rows index out of range");
    }
    Node n;
    n.op = Op::GatherRows;
    n.a = table;
    n.ids = std::move(ids);
    return push(std::move(n));
}

Tape::NodeId Tape::masked_cross_entropy(NodeId logits, std::vector<int> targets,
                                        std::vector<uint8_t> row_mask, double weight) {
    const Tensor& lg = nodes_[logits].value;
    if (static_cast<int>(targets.size()) != lg.rows ||
        static_cast<int>(row_mask.size()) != lg.rows) {
        throw ConfigError("masked_cross_entropy: targets/mask length must equal row count");
    }
    for (size_t i = 0; i < targets.size(); ++i) {
        if (row_mask[i] && (targets[i] < 0 || targets[i] >= lg.cols)) {
            throw ConfigError("masked_cross_entropy target out of range");
        }
    }
    Node n;
    n.op = Op::MaskedCE;
    n.a = logits;
    n.ids = std::move(targets);
    n.mask = std::move(row_mask);
    n.scalar_arg = weight;
    return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double factor) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.scalar_arg = factor;
    return push(std::move(n));
}

Tape::NodeId Tape::sum(NodeId a) {
    Node n;
    n.op = Op::Sum;
    n.a = a;
    return push(std::move(n));
}

Tape::NodeId Tape::stop_gradient(NodeId a) {
    Node n;
    n.op = Op::StopGrad;
    n.a = a;
    return push(std::move(n));
}

void Tape::eval_node(Node& n) {
    switch (n.op) {
        case Op::Leaf:
        case Op::Constant:
            break;
        case Op::MatMul: {
            const Tensor& a = nodes_[n.a].value;
            const Tensor& b = nodes_[n.b].value;
            n.value = Tensor::zeros(a.rows, b.cols);
            matmul_acc(a, b, n.value);
            break;
        }
        case Op::Add: {
            const Tensor& a = nodes_[n.a].value;
            const Tensor& b = nodes_[n.b].value;
            n.value = a;
            for (size_t i = 0; i < n.value.size(); ++i) n.value.data[i] += b.data[i];
            break;
        }
        case Op::AddRow: {
            const Tensor& a = nodes_[n.a].value;
            const Tensor& r = nodes_[n.b].value;
            n.value = a;
            for (int i = 0; i < a.rows; ++i)
                for (int j = 0; j < a.cols; ++j) n.value.at(i, j) += r.data[j];
            break;
        }
        case Op::Tanh: {
            const Tensor& a = nodes_[n.a].value;
            n.value = a;
            for (double& v : n.value.data) v = std::tanh(v);
            break;
        }
        case Op::RowSoftmax: {
            const Tensor& a = nodes_[n.a].value;
            n.value = Tensor::zeros(a.rows, a.cols);
            softmax_rows(a, n.value);
            break;
        }
        case Op::GatherRows: {
            const Tensor& t = nodes_[n.a].value;
            n.value = Tensor::zeros(static_cast<int>(n.ids.size()), t.cols);
            for (size_t i = 0; i < n.ids.size(); ++i) {
                for (int j = 0; j < t.cols; ++j)
                    n.value.at(static_cast<int>(i), j) = t.at(n.ids[i], j);
            }
            break;
        }
        case Op::MaskedCE: {
            const Tensor& lg = nodes_[n.a].value;
            double total = 0.0;
            for (int i = 0; i < lg.rows; ++i) {
                if (!n.mask[i]) continue;
                const double* x = &lg.data[static_cast<size_t>(i) * lg.cols];
                double m = x[0];
                for (int j = 1; j < lg.cols; ++j) m = std::max(m, x[j]);
                double z = 0.0;
                for (int j = 0; j < lg.cols; ++j) z += std::exp(x[j] - m);
                total += (m + std::log(z)) - x[n.ids[i]];
            }
            n.value = Tensor::scalar(n.scalar_arg * total);
            break;
        }
        case Op::Scale: {
            n.value = nodes_[n.a].value;
            for (double& v : n.value.data) v *= n.scalar_arg;
            break;
        }
        case Op::Sum: {
            double total = 0.0;
            for (double v : nodes_[n.a].value.data) total += v;
            n.value = Tensor::scalar(total);
            break;
        }
        case Op::StopGrad: {
            n.value = nodes_[n.a].value;
            break;
        }
    }
}

Tensor& Tape::grad_of(int idx) {
    Node& n = nodes_[idx];
    if (!n.grad_alloc) {
        n.grad = Tensor::zeros(n.value.rows, n.value.cols);
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::zero_gradients() {
    for (Node& n : nodes_) {
        n.grad = Tensor();
        n.grad_alloc = false;
    }
    backward_ran_ = false;
}

void Tape::backward(NodeId output, double seed) {
    if (!nodes_[output].value.is_scalar()) {
        throw UsageError("backward requires a scalar output node");
    }
    grad_of(output).data[0] += seed;
    // Reverse creation order is a valid topological order for a define-by-run
    // tape. Nodes never reached by any gradient are skipped entirely, so a
    // StopGrad boundary leaves its whole upstream subgraph untouched.
    for (int i = output; i >= 0; --i) {
        if (!nodes_[i].grad_alloc) continue;
        backward_node(i);
    }
    backward_ran_ = true;
}

void Tape::backward_node(int idx) {
    Node& n = nodes_[idx];
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::Leaf:
        case Op::Constant:
        case Op::StopGrad:
            break;
        case Op::MatMul: {
            matmul_a_bt_acc(g, nodes_[n.b].value, grad_of(n.a));
            matmul_at_b_acc(nodes_[n.a].value, g, grad_of(n.b));
            break;
        }
        case Op::Add: {
            Tensor& ga = grad_of(n.a);
            Tensor& gb = grad_of(n.b);
            for (size_t i = 0; i < g.size(); ++i) {
                ga.data[i] += g.data[i];
                gb.data[i] += g.data[i];
            }
            break;
        }
        case Op::AddRow: {
            Tensor& ga = grad_of(n.a);
            Tensor& gr = grad_of(n.b);
            for (int i = 0; i < g.rows; ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    ga.at(i, j) += g.at(i, j);
                    gr.data[j] += g.at(i, j);
                }
            }
            break;
        }
        case Op::Tanh: {
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < g.size(); ++i) {
                const double y = n.value.data[i];
                ga.data[i] += g.data[i] * (1.0 - y * y);
            }
            break;
        }
        case Op::RowSoftmax: {
            Tensor& ga = grad_of(n.a);
            for (int i = 0; i < g.rows; ++i) {
                const double* y = &n.value.data[static_cast<size_t>(i) * g.cols];
                const double* gy = &g.data[static_cast<size_t>(i) * g.cols];
                double dot = 0.0;
                for (int j = 0; j < g.cols; ++j) dot += gy[j] * y[j];
                for (int j = 0; j < g.cols; ++j)
                    ga.at(i, j) += y[j] * (gy[j] - dot);
            }
            break;
        }
        case Op::GatherRows: {
            Tensor& gt = grad_of(n.a);
            for (size_t i = 0; i < n.ids.size(); ++i) {
                for (int j = 0; j < g.cols; ++j)
                    gt.at(n.ids[i], j) += g.at(static_cast<int>(i), j);
            }
            break;
        }
        case Op::MaskedCE: {
            // d/dlogits = weight * (softmax(row) - onehot(target)) per masked row
            Tensor& gl = grad_of(n.a);
            const Tensor& lg = nodes_[n.a].value;
            const double w = n.scalar_arg * g.data[0];
            for (int i = 0; i < lg.rows; ++i) {
                if (!n.mask[i]) continue;
                const double* x = &lg.data[static_cast<size_t>(i) * lg.cols];
                double m = x[0];
                for (int j = 1; j < lg.cols; ++j) m = std::max(m, x[j]);
                double z = 0.0;
                for (int j = 0; j < lg.cols; ++j) z += std::exp(x[j] - m);
                for (int j = 0; j < lg.cols; ++j) {
                    double p = std::exp(x[j] - m) / z;
                    gl.at(i, j) += w * (p - (j == n.ids[i] ? 1.0 : 0.0));
                }
            }
            break;
        }
        case Op::Scale: {
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * n.scalar_arg;
            break;
        }
        case Op::Sum: {
            Tensor& ga = grad_of(n.a);
            for (size_t i = 0; i < ga.size(); ++i) ga.data[i] += g.data[0];
            break;
        }
    }
}

Tensor Tape::gradient(NodeId id) const {
    const Node& n = nodes_[id];
    if (n.grad_alloc) return n.grad;
    return Tensor::zeros(n.value.rows, n.value.cols);
}

double Tape::reeval_scalar(NodeId output, bool freeze_stop_grad) {
    for (int i = 0; i <= output; ++i) {
        Node& n = nodes_[i];
        if (n.op == Op::Leaf || n.op == Op::Constant) continue;
        if (n.op == Op::StopGrad && freeze_stop_grad) continue;
        eval_node(n);
    }
    if (!nodes_[output].value.is_scalar()) {
        throw UsageError("reeval_scalar requires a scalar output node");
    }
    return nodes_[output].value.data[0];
}

std::vector<Tape::NodeId> Tape::leaf_ids() const {
    std::vector<NodeId> out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].op == Op::Leaf) out.push_back(static_cast<NodeId>(i));
    }
    return out;
}

GradCheckReport grad_check(Tape& tape, Tape::NodeId output, double tolerance,
                           double fd_step) {
    if (!tape.value(output).is_scalar()) {
        throw UsageError("grad_check requires a scalar output");
    }
    tape.zero_gradients();
    // Freeze detached values first so the analytic pass and the FD pass
    // differentiate the same function.
    tape.reeval_scalar(output, true);
    tape.backward(output);

    GradCheckReport report;
    for (Tape::NodeId leaf : tape.leaf_ids()) {
        const Tensor analytic = tape.gradient(leaf);
        Tensor& v = tape.mutable_value(leaf);
        for (size_t k = 0; k < v.size(); ++k) {
            const double orig = v.data[k];
            v.data[k] = orig + fd_step;
            const double up = tape.reeval_scalar(output, true);
            v.data[k] = orig - fd_step;
            const double down = tape.reeval_scalar(output, true);
            v.data[k] = orig;
            const double fd = (up - down) / (2.0 * fd_step);
            const double a = analytic.data[k];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_leaf = tape.node_name(leaf);
            }
            ++report.checked;
        }
    }
    tape.reeval_scalar(output, true);  // restore values
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

}  // namespace maskdiff
