#include "robkoop/assignment.hpp"

#include "robkoop/error.hpp"

#include <limits>

namespace robkoop {

std::vector<Eigen::Index> min_cost_assignment(const Eigen::MatrixXd& cost) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw ValidationError("min_cost_assignment: cost matrix must be square");
  if (!cost.allFinite()) throw ValidationError("min_cost_assignment: costs must be finite");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials u (rows), v (cols); p[j] = row matched to column j. 1-based with sentinel column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<Eigen::Index> p(n + 1, 0), way(n + 1, 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const Eigen::Index i0 = p[j0];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> assignment(n, 0);
  for (Eigen::Index j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

}  // namespace robkoop
