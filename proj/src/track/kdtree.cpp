#include "fslam/track/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace fslam {

namespace {
constexpr int kLeafSize = 16;
}

KdTree3::KdTree3(const std::vector<Eigen::Vector3d>& points) : points_(points) {
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
    if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()), 0);
}

int KdTree3::build(int begin, int end, int depth) {
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin <= kLeafSize) {
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }
    const int axis = depth % 3;
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    node.axis = axis;
    node.split = points_[order_[mid]][axis];
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

std::vector<int> KdTree3::knn(const Eigen::Vector3d& query, int k) const {
    using Entry = std::pair<double, int>;  // (squared distance, index)
    std::priority_queue<Entry> heap;       // max-heap keeps the current worst on top

    auto visit = [&](auto&& self, int node_id) -> void {
        const Node& node = nodes_[node_id];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const int idx = order_[i];
                const double d2 = (points_[idx] - query).squaredNorm();
                if (static_cast<int>(heap.size()) < k) {
                    heap.emplace(d2, idx);
                } else if (d2 < heap.top().first) {
                    heap.pop();
                    heap.emplace(d2, idx);
                }
            }
            return;
        }
        const double delta = query[node.axis] - node.split;
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        self(self, near);
        if (static_cast<int>(heap.size()) < k || delta * delta < heap.top().first) self(self, far);
    };
    if (root_ >= 0) visit(visit, root_);

    std::vector<int> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
        out[i] = heap.top().second;
        heap.pop();
    }
    return out;
}

}  // namespace fslam
