#include <algorithm>
#include <numeric>

#include "advt/models.hpp"

namespace advt {

namespace {

int majority(const std::vector<int>& counts) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(counts.size()); ++k) {
    if (counts[static_cast<std::size_t>(k)] > counts[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // sum over children of sum_c count_c^2 / n_child
  std::size_t left_count = 0;
};

class CartBuilder {
 public:
  CartBuilder(const Dataset& data, const Hyperparams& hp) : data_(data), hp_(hp) {}

  std::vector<TreeNode> build() {
    std::vector<std::size_t> all(data_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(all, 0, -1);
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<std::size_t>& idx, int depth, int parent) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{});
    nodes_.back().parent = parent;

    std::vector<int> counts(static_cast<std::size_t>(data_.num_classes), 0);
    for (std::size_t i : idx) ++counts[static_cast<std::size_t>(data_.y[i])];
    const bool pure = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) <= 1;

    Split split;
    if (!pure && depth < hp_.max_depth &&
        idx.size() >= 2 * static_cast<std::size_t>(std::max(1, hp_.min_leaf))) {
      split = best_split(idx, counts);
    }
    if (split.feature < 0) {
      nodes_[static_cast<std::size_t>(id)].label = majority(counts);
      return id;
    }

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t i : idx) {
      (data_.x(static_cast<Eigen::Index>(i), split.feature) <= split.threshold ? left : right)
          .push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();

    nodes_[static_cast<std::size_t>(id)].feature = split.feature;
    nodes_[static_cast<std::size_t>(id)].threshold = split.threshold;
    const int l = grow(left, depth + 1, id);
    nodes_[static_cast<std::size_t>(id)].left = l;
    const int r = grow(right, depth + 1, id);
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  // Gini minimization == maximizing sum_children sum_c n_c^2 / n_child.
  Split best_split(const std::vector<std::size_t>& idx, const std::vector<int>& counts) const {
    const std::size_t n = idx.size();
    const auto min_leaf = static_cast<std::size_t>(std::max(1, hp_.min_leaf));
    double parent_score = 0.0;
    for (int c : counts) parent_score += static_cast<double>(c) * c;
    parent_score /= static_cast<double>(n);

    Split best;
    best.score = parent_score + 1e-12;
    std::vector<std::pair<double, int>> column(n);
    std::vector<int> left_counts(counts.size());
    for (int f = 0; f < data_.dim(); ++f) {
      for (std::size_t r = 0; r < n; ++r) {
        column[r] = {data_.x(static_cast<Eigen::Index>(idx[r]), f), data_.y[idx[r]]};
      }
      std::sort(column.begin(), column.end());
      std::fill(left_counts.begin(), left_counts.end(), 0);
      double left_sq = 0.0;
      double right_sq = parent_score * static_cast<double>(n);
      for (std::size_t r = 0; r + 1 < n; ++r) {
        const auto c = static_cast<std::size_t>(column[r].second);
        const double lc = left_counts[c];
        const double rc = counts[c] - lc;
        left_sq += 2.0 * lc + 1.0;
        right_sq -= 2.0 * rc - 1.0;
        ++left_counts[c];
        const std::size_t nl = r + 1;
        const std::size_t nr = n - nl;
        if (nl < min_leaf || nr < min_leaf) continue;
        if (column[r].first == column[r + 1].first) continue;
        const double score = left_sq / static_cast<double>(nl) + right_sq / static_cast<double>(nr);
        if (score > best.score) {
          double t = 0.5 * (column[r].first + column[r + 1].first);
          if (t >= column[r + 1].first) t = column[r].first;
          best = {f, t, score, nl};
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  const Hyperparams& hp_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

DecisionTree::DecisionTree(int dim, int num_classes, std::vector<TreeNode> nodes)
    : dim_(dim), num_classes_(num_classes), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ContractError("tree has no nodes");
  const int count = static_cast<int>(nodes_.size());
  std::vector<int> seen_parent(nodes_.size(), -2);
  seen_parent[0] = -1;
  for (int i = 0; i < count; ++i) {
    const TreeNode& n = nodes_[static_cast<std::size_t>(i)];
    if (n.is_leaf()) {
      if (n.right >= 0) throw ContractError("leaf with a right child");
      if (n.label < 0 || n.label >= num_classes_) throw ContractError("leaf class out of range");
      continue;
    }
    if (n.right < 0 || n.left >= count || n.right >= count || n.left == 0 || n.right == 0) {
      throw ContractError("internal node " + std::to_string(i) + " needs two valid children");
    }
    if (n.feature < 0 || n.feature >= dim_) throw ContractError("split feature out of range");
    for (int child : {n.left, n.right}) {
      if (seen_parent[static_cast<std::size_t>(child)] != -2) {
        throw ContractError("node " + std::to_string(child) + " has two parents");
      }
      seen_parent[static_cast<std::size_t>(child)] = i;
    }
  }
  for (int i = 0; i < count; ++i) {
    if (seen_parent[static_cast<std::size_t>(i)] == -2) {
      throw ContractError("node " + std::to_string(i) + " has no parent");
    }
    nodes_[static_cast<std::size_t>(i)].parent = seen_parent[static_cast<std::size_t>(i)];
  }
  // With one parent per node, reaching every node from the root rules out cycles.
  std::vector<char> visited(nodes_.size(), 0);
  std::vector<int> stack{0};
  int reached = 0;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (visited[static_cast<std::size_t>(id)]) throw ContractError("tree contains a cycle");
    visited[static_cast<std::size_t>(id)] = 1;
    ++reached;
    const TreeNode& n = node(id);
    if (!n.is_leaf()) {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  if (reached != count) throw ContractError("tree has nodes unreachable from the root");
}

int DecisionTree::depth() const {
  int deepest = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& n = node(id);
    if (!n.is_leaf()) {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return deepest;
}

int DecisionTree::leaf_for(const VectorRef& x) const {
  if (x.size() != dim_) throw ContractError("input dimension does not match the tree");
  int id = 0;
  while (!node(id).is_leaf()) {
    const TreeNode& n = node(id);
    id = x(n.feature) <= n.threshold ? n.left : n.right;
  }
  return id;
}

DecisionTree DecisionTree::train(const Dataset& data, const Hyperparams& hp) {
  if (data.empty()) throw TrainingError("tree: empty training set");
  validate(data);
  CartBuilder builder(data, hp);
  return DecisionTree(data.dim(), data.num_classes, builder.build());
}

}  // namespace advt
