#include "fslam/eval/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace fslam {

double ate_rmse(const Trajectory& estimated, const Trajectory& groundtruth, bool align,
                double max_dt) {
    // Associate by nearest timestamp; both trajectories are time-ordered.
    std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;  // (est center, gt center)
    std::size_t j = 0;
    for (const TimedPose& e : estimated) {
        while (j + 1 < groundtruth.size() &&
               std::abs(groundtruth[j + 1].timestamp - e.timestamp) <=
                   std::abs(groundtruth[j].timestamp - e.timestamp))
            ++j;
        if (groundtruth.empty() || std::abs(groundtruth[j].timestamp - e.timestamp) > max_dt)
            continue;
        const Pose ec = se3_inverse(e.pose);
        const Pose gc = se3_inverse(groundtruth[j].pose);
        pairs.emplace_back(ec.translation, gc.translation);
    }
    if (pairs.size() < 3)
        throw std::runtime_error("ate_rmse: only " + std::to_string(pairs.size()) +
                                 " associated pairs, need at least 3");

    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    Eigen::Vector3d trans = Eigen::Vector3d::Zero();
    if (align) {
        // Closed-form rigid alignment of estimated centers onto ground truth.
        Eigen::Vector3d mean_e = Eigen::Vector3d::Zero(), mean_g = Eigen::Vector3d::Zero();
        for (const auto& [pe, pg] : pairs) {
            mean_e += pe;
            mean_g += pg;
        }
        mean_e /= static_cast<double>(pairs.size());
        mean_g /= static_cast<double>(pairs.size());

        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const auto& [pe, pg] : pairs) cov += (pg - mean_g) * (pe - mean_e).transpose();
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Eigen::Vector3d s = Eigen::Vector3d::Ones();
        if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s.z() = -1.0;
        rot = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
        trans = mean_g - rot * mean_e;
    }

    double sq = 0.0;
    for (const auto& [pe, pg] : pairs) sq += (rot * pe + trans - pg).squaredNorm();
    return std::sqrt(sq / static_cast<double>(pairs.size()));
}

double psnr(const ImageD& a, const ImageD& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr: image shapes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

ImageU8 segment_by_query(const ImageD& feature, const Eigen::MatrixXd& embeddings) {
    const int w = feature.width, h = feature.height, d = feature.channels;
    if (embeddings.cols() != d)
        throw std::invalid_argument("segment_by_query: embedding dimension mismatch");
    const int classes = static_cast<int>(embeddings.rows());

    ImageU8 out(w, h, 1, kInvalidLabel);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* f = &feature.at(x, y, 0);
            double norm2 = 0.0;
            for (int c = 0; c < d; ++c) norm2 += f[c] * f[c];
            if (norm2 < 1e-12) continue;  // invalid pixel
            // argmax of cosine similarity == argmax of the dot product
            int best = 0;
            double best_dot = -1e300;
            for (int cls = 0; cls < classes; ++cls) {
                double dot = 0.0;
                for (int c = 0; c < d; ++c) dot += embeddings(cls, c) * f[c];
                if (dot > best_dot) {
                    best_dot = dot;
                    best = cls;
                }
            }
            out.at(x, y) = static_cast<std::uint8_t>(best);
        }
    }
    return out;
}

SemanticAccumulator::SemanticAccumulator(int classes)
    : classes_(classes),
      intersection_(classes, 0),
      pred_count_(classes, 0),
      gt_count_(classes, 0) {}

void SemanticAccumulator::add(const ImageU8& pred, const ImageU8& gt) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("semantic metrics: shape mismatch");
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        const std::uint8_t g = gt.data[i];
        if (g == kInvalidLabel) continue;
        if (g >= classes_) throw std::invalid_argument("semantic metrics: label out of range");
        ++valid_;
        ++gt_count_[g];
        const std::uint8_t p = pred.data[i];
        if (p != kInvalidLabel && p < classes_) {
            ++pred_count_[p];
            if (p == g) {
                ++correct_;
                ++intersection_[g];
            }
        }
    }
}

SemanticMetrics SemanticAccumulator::result() const {
    SemanticMetrics m;
    m.accuracy = valid_ > 0 ? static_cast<double>(correct_) / static_cast<double>(valid_) : 0.0;
    double iou_sum = 0.0;
    int iou_classes = 0;
    for (int c = 0; c < classes_; ++c) {
        const std::int64_t uni = gt_count_[c] + pred_count_[c] - intersection_[c];
        if (uni == 0) continue;  // absent from both prediction and ground truth
        iou_sum += static_cast<double>(intersection_[c]) / static_cast<double>(uni);
        ++iou_classes;
    }
    m.miou = iou_classes > 0 ? iou_sum / iou_classes : 0.0;
    return m;
}

SemanticMetrics semantic_metrics(const ImageU8& pred, const ImageU8& gt) {
    int max_label = 0;
    for (const std::uint8_t v : gt.data)
        if (v != kInvalidLabel) max_label = std::max<int>(max_label, v);
    for (const std::uint8_t v : pred.data)
        if (v != kInvalidLabel) max_label = std::max<int>(max_label, v);
    SemanticAccumulator acc(max_label + 1);
    acc.add(pred, gt);
    return acc.result();
}

}  // namespace fslam
