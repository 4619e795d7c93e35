#pragma once

#include <Eigen/Dense>

#include <vector>

namespace robkoop {

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// O(n^3)). Returns assignment[row] = column.
std::vector<Eigen::Index> min_cost_assignment(const Eigen::MatrixXd& cost);

}  // namespace robkoop
