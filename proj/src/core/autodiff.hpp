#pragma once

#include <functional>
#include <vector>

#include "core/tensor.hpp"
#include "geometry/intrinsics.hpp"

namespace prism {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; only valid while the graph
/// that produced it is alive.
struct Var {
    Graph* graph = nullptr;
    int id = -1;
    bool defined() const { return graph != nullptr && id >= 0; }
    const Tensor& value() const;
};

/// Dynamic reverse-mode autodiff tape. One graph per training sample;
/// nodes are appended in evaluation order, so reverse id order is a valid
/// topological order for the backward sweep. Non-copyable: closures hold a
/// pointer back to the graph.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor t);
    Var leaf(Tensor t); // gradient-tracked input

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;
    /// Gradient accumulated for v by the last backward(); zeros if none.
    Tensor grad(Var v) const;

    /// Reverse sweep from a scalar (numel-1) root; seeds d(root)/d(root)=1.
    void backward(Var root);

    // ---- elementwise ----
    Var add(Var a, Var b); // numel-1 broadcast allowed on either side
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var add_scalar(Var a, double s);
    Var mul_scalar(Var a, double s);
    Var abs(Var a);
    Var exp(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var elu(Var a);
    Var reciprocal(Var a);
    Var clamp_min(Var a, double lo);
    Var minimum(Var a, Var b); // ties route gradient to a

    // ---- reductions / shape ----
    Var sum(Var a);            // -> {1}
    Var mean(Var a);           // -> {1}
    Var mean_channels(Var a);  // (C,H,W) -> (1,H,W)
    Var mean_hw(Var a);        // (C,H,W) -> (C,1,1)
    Var concat_channels(const std::vector<Var>& parts); // along C
    Var slice_channels(Var a, int start, int count);

    // ---- spatial ----
    Var grad_x(Var a); // (C,H,W) -> (C,H,W-1), v[:, :, j+1] - v[:, :, j]
    Var grad_y(Var a); // (C,H,W) -> (C,H-1,W)
    Var conv2d(Var x, Var w, Var b, int stride, int pad); // zero padding
    Var box_filter3(Var x); // 3x3 mean, reflection padding
    Var upsample_nearest2x(Var x);
    Var upsample_bilinear(Var x, int out_h, int out_w); // matches resize_bilinear
    /// Bilinear sampling of input at normalized grid coords (align-corners
    /// convention, border clamping). grid is (2,H',W') with x in channel 0.
    Var grid_sample_border(Var input, Var grid);

    // ---- geometry ----
    struct WarpGridResult {
        Var grid;    // (2,H,W) normalized sampling coordinates
        Tensor mask; // (1,H,W) 1.0 where depth in front of camera and inside frame
    };
    /// Fused backproject -> rigid transform -> pinhole projection producing a
    /// sampling grid; differentiable w.r.t. depth (1,H,W) and pose (6: axis-
    /// angle rotation then translation).
    WarpGridResult make_warp_grid(Var depth, Var pose, const CameraIntrinsics& k);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad; // engaged lazily by the backward sweep
        bool requires_grad = false;
        std::function<void()> backprop; // empty for constants/leaves
    };

    int push(Tensor value, bool requires_grad, std::function<void()> backprop = {});
    Tensor& grad_buffer(int id); // allocate-on-demand, zero-initialized
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    void check_owned(Var v) const;

    std::vector<Node> nodes_;
};

// Operator sugar for loss code readability.
inline Var operator+(Var a, Var b) { return a.graph->add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.graph->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.graph->div(a, b); }
inline Var operator*(Var a, double s) { return a.graph->mul_scalar(a, s); }
inline Var operator*(double s, Var a) { return a.graph->mul_scalar(a, s); }
inline Var operator+(Var a, double s) { return a.graph->add_scalar(a, s); }

} // namespace prism
