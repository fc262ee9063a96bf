#pragma once

#include <limits>
#include <vector>

#include "auv/baker.hpp"
#include "auv/synthdata.hpp"

namespace auv {

// Spread of each landmark's UV across items next to the spread of its raw
// input position. Std is radial: sqrt of the summed per-axis variances.
struct LandmarkStats {
  std::vector<Vec2> uv_mean;
  std::vector<double> uv_std;
  std::vector<double> input_std;
  double ratio(int l) const { return uv_std[static_cast<std::size_t>(l)] / input_std[static_cast<std::size_t>(l)]; }
};

// uv[i][l] and input[i][l]: landmark l of item i. Input rows may have any
// dimension (2D pixels, 3D points).
LandmarkStats landmark_stats(const std::vector<std::vector<Vec2>>& uv,
                             const std::vector<std::vector<Eigen::VectorXd>>& input);

// Toy: landmarks in unit image coordinates through the UV mapper.
LandmarkStats toy_landmark_stats(AuvModel<float>& model, const std::vector<ToyImage>& images);

// 3D: landmark positions must be in the preprocessed (unit box) frame. The
// normal fed to the masker is that of the nearest surface sample.
PointMapping map_landmarks(AuvModel<float>& model, const ShapeData& shape, const std::vector<Vec3>& landmarks);
LandmarkStats shape_landmark_stats(AuvModel<float>& model, const std::vector<ShapeData>& shapes,
                                   const std::vector<std::vector<Vec3>>& landmarks);

// One labeled exemplar per texture; -1 marks unlabeled texels.
struct LabelMap {
  int resolution = 0;
  std::vector<std::vector<int>> labels;  // [K][R*R]
  int label(int k, int x, int y) const {
    return labels[static_cast<std::size_t>(k)][static_cast<std::size_t>(y) * resolution + x];
  }
};

// Labels each texel with the majority label of the exemplar points routed to
// it (ties to the lower label).
LabelMap label_map_from_points(const PointMapping& mapping, const std::vector<int>& point_labels, int label_count,
                               int resolution);

// Each point takes the label of its texel in the texture picked by its argmax
// mask; unlabeled texels defer to the nearest labeled texel of that texture
// (then of the other textures, lowest index first). Throws DataError when the
// map has no labels at all.
std::vector<int> segment_points(const PointMapping& mapping, const LabelMap& map);

// Per-class IoU; NaN for classes absent from both.
std::vector<double> iou(const std::vector<int>& pred, const std::vector<int>& truth, int label_count);
// Mean over classes present in either argument.
double mean_iou(const std::vector<int>& pred, const std::vector<int>& truth, int label_count);

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();
// 10 log10(1 / MSE) for [0,1] images; +inf when identical.
double psnr(const Image& a, const Image& b);
// Same, restricted to pixels with mask != 0.
double psnr_masked(const Image& a, const Image& b, const std::vector<std::uint8_t>& mask);

// UV centroid of texels whose color lies within `tolerance` (max channel
// difference) of `color`. Returns false when no texel matches.
bool color_patch_centroid(const Image& texture, const Vec3& color, double tolerance, Vec2& centroid);

}  // namespace auv
