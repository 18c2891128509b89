#ifndef BHKAM_DIAGONAL_HPP
#define BHKAM_DIAGONAL_HPP

#include <algorithm>
#include <array>
#include <complex>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bhkam/lattice.hpp"

namespace bhkam {

// Contiguous site interval [lo, hi]; empty when hi < lo.
struct Window {
  int lo = 0;
  int hi = -1;

  static Window of(const Move& rho) {
    const auto s = rho.support();
    if (s.empty()) return {};
    return {s.front(), s.back()};
  }
  static Window single(int x) { return {x, x}; }

  bool empty() const { return hi < lo; }
  int width() const { return empty() ? 0 : hi - lo + 1; }
  bool contains(int x) const { return x >= lo && x <= hi; }
  bool touches(const Move& rho) const {
    for (int x = std::max(lo, 0); x <= hi && x < rho.size(); ++x)
      if (rho[x] != 0) return true;
    return false;
  }
  friend Window hull(const Window& a, const Window& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
  }
  friend bool operator==(const Window& a, const Window& b) {
    return (a.empty() && b.empty()) || (a.lo == b.lo && a.hi == b.hi);
  }
  friend bool operator<(const Window& a, const Window& b) {
    return a.lo != b.lo ? a.lo < b.lo : a.hi < b.hi;
  }
};

class DiagNode;
using DiagFn = std::shared_ptr<const DiagNode>;

// fn evaluated at eta + shift. A guarded factor evaluates to zero when
// eta + shift leaves the non-negative orthant, which is the convention for
// matrix-element coefficients of operator products.
struct DiagFactor {
  DiagFn fn;
  Move shift;
  bool conj = false;
  bool guard = true;
};

struct DiagProduct {
  cplx coeff{1.0, 0.0};
  std::vector<DiagFactor> factors;
};

inline constexpr std::size_t kMemoCap = 1u << 18;

// Function of an occupation configuration that reads only the sites in its
// window. Leaves wrap an evaluator; combinations are sums of products of
// shifted nodes. Values are memoized on the window projection.
class DiagNode {
 public:
  using Evaluator = std::function<cplx(const SiteVector&)>;

  static DiagFn leaf(Window w, Evaluator f, std::string label = {}) {
    auto n = std::shared_ptr<DiagNode>(new DiagNode);
    n->window_ = w;
    n->leaf_ = std::move(f);
    n->label_ = std::move(label);
    return n;
  }

  static DiagFn constant(cplx c) {
    auto n = std::shared_ptr<DiagNode>(new DiagNode);
    n->is_constant_ = true;
    n->constant_ = c;
    n->label_ = "const";
    return n;
  }

  static DiagFn combination(std::vector<DiagProduct> terms) {
    auto n = std::shared_ptr<DiagNode>(new DiagNode);
    Window w;
    for (const auto& t : terms)
      for (const auto& f : t.factors) w = hull(w, hull(f.fn->window(), Window::of(f.shift)));
    n->window_ = w;
    n->terms_ = std::move(terms);
    return n;
  }

  const Window& window() const { return window_; }
  bool is_constant() const { return is_constant_; }
  const std::string& label() const { return label_; }

  cplx operator()(const SiteVector& eta) const {
    if (is_constant_) return constant_;
    const Key key = make_key(eta);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = memo_.find(key);
      if (it != memo_.end()) return it->second;
    }
    const cplx value = compute(eta);
    std::lock_guard<std::mutex> lock(mutex_);
    if (memo_.size() >= kMemoCap) memo_.clear();
    memo_.emplace(key, value);
    return value;
  }

  void clear_memo() const {
    std::lock_guard<std::mutex> lock(mutex_);
    memo_.clear();
    for (const auto& t : terms_)
      for (const auto& f : t.factors) f.fn->clear_memo();
  }

 private:
  struct Key {
    std::array<int, kMaxSites> v{};
    int n = 0;
    bool operator==(const Key& o) const {
      return n == o.n && std::equal(v.begin(), v.begin() + n, o.v.begin());
    }
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = 1469598103934665603ULL;
      for (int i = 0; i < k.n; ++i) {
        h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.v[static_cast<std::size_t>(i)]));
        h *= 1099511628211ULL;
      }
      return static_cast<std::size_t>(h);
    }
  };

  DiagNode() = default;

  Key make_key(const SiteVector& eta) const {
    Key k;
    for (int x = std::max(window_.lo, 0); x <= window_.hi && x < eta.size(); ++x)
      k.v[static_cast<std::size_t>(k.n++)] = eta[x];
    return k;
  }

  cplx compute(const SiteVector& eta) const {
    if (leaf_) return leaf_(eta);
    cplx total = 0.0;
    for (const auto& t : terms_) {
      cplx prod = t.coeff;
      for (const auto& f : t.factors) {
        if (f.shift.size() == 0 || f.shift.is_zero()) {
          const cplx v = (*f.fn)(eta);
          prod *= f.conj ? std::conj(v) : v;
        } else {
          const SiteVector shifted = eta + f.shift;
          if (f.guard && !shifted.non_negative()) {
            prod = 0.0;
            break;
          }
          const cplx v = (*f.fn)(shifted);
          prod *= f.conj ? std::conj(v) : v;
        }
        if (prod == cplx(0.0)) break;
      }
      total += prod;
    }
    return total;
  }

  Window window_;
  Evaluator leaf_;
  std::vector<DiagProduct> terms_;
  bool is_constant_ = false;
  cplx constant_{0.0, 0.0};
  std::string label_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<Key, cplx, KeyHash> memo_;
};

inline DiagFn diag_constant(cplx c) { return DiagNode::constant(c); }

inline DiagFn diag_scaled(const DiagFn& f, cplx c) {
  return DiagNode::combination({DiagProduct{c, {DiagFactor{f, Move(), false, false}}}});
}

inline DiagFn diag_sum(const std::vector<DiagFn>& fs) {
  std::vector<DiagProduct> terms;
  terms.reserve(fs.size());
  for (const auto& f : fs) terms.push_back(DiagProduct{1.0, {DiagFactor{f, Move(), false, false}}});
  return DiagNode::combination(std::move(terms));
}

inline DiagFn diag_product(const DiagFn& a, const DiagFn& b) {
  return DiagNode::combination({DiagProduct{1.0, {DiagFactor{a, Move(), false, false}, DiagFactor{b, Move(), false, false}}}});
}

// (Delta_rho b)(eta) = b(eta + rho) - b(eta).
inline DiagFn discrete_derivative(const DiagFn& b, const Move& rho) {
  return DiagNode::combination({DiagProduct{1.0, {DiagFactor{b, rho, false, false}}},
                                DiagProduct{-1.0, {DiagFactor{b, Move(), false, false}}}});
}

// E(eta) = sum_x eta_x^2 over the given window.
inline DiagFn onsite_energy_fn(Window w) {
  return DiagNode::leaf(w, [w](const SiteVector& eta) {
    double e = 0.0;
    for (int x = w.lo; x <= w.hi; ++x) e += static_cast<double>(eta[x]) * eta[x];
    return cplx(e, 0.0);
  }, "E");
}

}  // namespace bhkam

#endif  // BHKAM_DIAGONAL_HPP
