#pragma once

#include <cstddef>
#include <vector>

namespace zrptag {

/// Binary indexed tree over nonnegative weights with O(log n) point update
/// and prefix search.
template <class Scalar>
class FenwickTree {
 public:
  FenwickTree() = default;
  explicit FenwickTree(std::size_t n) { resize(n); }

  void resize(std::size_t n) {
    n_ = n;
    tree_.assign(n + 1, Scalar(0));
    value_.assign(n, Scalar(0));
    top_ = 1;
    while (top_ * 2 <= n_) top_ *= 2;
  }

  std::size_t size() const { return n_; }
  Scalar value(std::size_t i) const { return value_[i]; }
  Scalar total() const { return total_; }

  void set(std::size_t i, Scalar v) { add(i, v - value_[i]); }

  void add(std::size_t i, Scalar delta) {
    value_[i] += delta;
    total_ += delta;
    for (std::size_t j = i + 1; j <= n_; j += j & (~j + 1)) tree_[j] += delta;
  }

  /// Recomputes the internal sums from the stored values (clears drift).
  void rebuild() {
    total_ = Scalar(0);
    for (std::size_t j = 1; j <= n_; ++j) tree_[j] = value_[j - 1];
    for (std::size_t j = 1; j <= n_; ++j) {
      const std::size_t p = j + (j & (~j + 1));
      if (p <= n_) tree_[p] += tree_[j];
    }
    for (const auto& v : value_) total_ += v;
  }

  Scalar prefix(std::size_t count) const {
    Scalar s(0);
    for (std::size_t j = count; j > 0; j -= j & (~j + 1)) s += tree_[j];
    return s;
  }

  /// Smallest i with prefix(i + 1) > u, for 0 <= u < total().
  std::size_t find(Scalar u) const {
    std::size_t pos = 0;
    for (std::size_t step = top_; step > 0; step >>= 1) {
      const std::size_t next = pos + step;
      if (next <= n_ && tree_[next] <= u) {
        pos = next;
        u -= tree_[next];
      }
    }
    return pos < n_ ? pos : n_ - 1;
  }

 private:
  std::size_t n_ = 0, top_ = 1;
  std::vector<Scalar> tree_;
  std::vector<Scalar> value_;
  Scalar total_ = Scalar(0);
};

}  // namespace zrptag
