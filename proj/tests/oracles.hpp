#pragma once

// Independent reference computations used by the tests. Deliberately naive:
// literal definitions, no shared code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

/// Exact fraction with int64 parts, always reduced.
struct Frac {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Frac() = default;
  Frac(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const auto g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend Frac operator+(Frac a, Frac b) { return {a.num * b.den + b.num * a.den, a.den * b.den}; }
  friend Frac operator*(Frac a, Frac b) { return {a.num * b.num, a.den * b.den}; }
  friend Frac operator/(Frac a, Frac b) { return {a.num * b.den, a.den * b.num}; }
  friend bool operator==(Frac a, Frac b) { return a.num == b.num && a.den == b.den; }
};

template <class T>
std::map<T, int> counts(const std::vector<T>& v) {
  std::map<T, int> m;
  for (const auto& x : v) ++m[x];
  return m;
}

template <class T>
std::int64_t clipped(const std::vector<T>& cand, const std::vector<T>& ref) {
  auto cc = counts(cand);
  auto rc = counts(ref);
  std::int64_t total = 0;
  for (const auto& [w, n] : cc) {
    auto it = rc.find(w);
    if (it != rc.end()) total += std::min(n, it->second);
  }
  return total;
}

/// BLEU-1 as (clipped precision fraction, brevity penalty).
template <class T>
std::pair<Frac, double> bleu1_parts(const std::vector<T>& cand, const std::vector<T>& ref) {
  if (cand.empty()) return {Frac(0, 1), 0.0};
  const auto c = static_cast<std::int64_t>(cand.size());
  const auto r = static_cast<std::int64_t>(ref.size());
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return {Frac(clipped(cand, ref), c), bp};
}

struct RougeFrac {
  Frac p, r, f1;
};

template <class T>
RougeFrac rouge1(const std::vector<T>& cand, const std::vector<T>& ref) {
  const auto o = clipped(cand, ref);
  if (o == 0) return {};
  Frac p(o, static_cast<std::int64_t>(cand.size()));
  Frac r(o, static_cast<std::int64_t>(ref.size()));
  Frac f1 = Frac(2, 1) * p * r / (p + r);
  return {p, r, f1};
}

/// METEOR-lite following the literal list-popping alignment: candidate
/// entries scanned from the last, each matched with the last remaining
/// reference entry of equal key; exact stage, then stem stage on leftovers.
template <class T>
double meteor_lite(const std::vector<T>& cand, const std::vector<T>& ref,
                   const std::function<T(const T&)>& stem, bool use_stems = true) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<std::pair<int, T>> hyp, rf;
  for (int i = 0; i < static_cast<int>(cand.size()); ++i) hyp.emplace_back(i, cand[i]);
  for (int j = 0; j < static_cast<int>(ref.size()); ++j) rf.emplace_back(j, ref[j]);
  std::vector<std::pair<int, int>> matches;
  auto stage = [&](const std::function<T(const T&)>& key) {
    for (int i = static_cast<int>(hyp.size()) - 1; i >= 0; --i) {
      for (int j = static_cast<int>(rf.size()) - 1; j >= 0; --j) {
        if (key(hyp[i].second) == key(rf[j].second)) {
          matches.emplace_back(hyp[i].first, rf[j].first);
          hyp.erase(hyp.begin() + i);
          rf.erase(rf.begin() + j);
          break;
        }
      }
    }
  };
  stage([](const T& x) { return x; });
  if (use_stems) stage(stem);
  if (matches.empty()) return 0.0;
  std::sort(matches.begin(), matches.end());
  int chunks = 1;
  for (std::size_t k = 0; k + 1 < matches.size(); ++k) {
    if (!(matches[k + 1].first == matches[k].first + 1 &&
          matches[k + 1].second == matches[k].second + 1))
      ++chunks;
  }
  const double m = static_cast<double>(matches.size());
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = matches.size() > 1 ? (chunks - 1.0) / (m - 1.0) : 0.0;
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

/// Macro P/R/F1 over the three slot classes from a 3x3 confusion matrix
/// (rows = true slot, columns = predicted slot). Undefined ratios count as 0.
struct MacroFrac {
  Frac accuracy, precision, recall, f1;
};

inline MacroFrac macro_metrics(const std::int64_t m[3][3]) {
  std::int64_t total = 0, correct = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      total += m[i][j];
      if (i == j) correct += m[i][j];
    }
  MacroFrac out;
  out.accuracy = total ? Frac(correct, total) : Frac(0, 1);
  Frac ps(0, 1), rs(0, 1), fs(0, 1);
  for (int k = 0; k < 3; ++k) {
    std::int64_t predicted = 0, actual = 0;
    for (int i = 0; i < 3; ++i) predicted += m[i][k];
    for (int j = 0; j < 3; ++j) actual += m[k][j];
    const Frac p = predicted ? Frac(m[k][k], predicted) : Frac(0, 1);
    const Frac r = actual ? Frac(m[k][k], actual) : Frac(0, 1);
    const Frac f = (p.num == 0 && r.num == 0) ? Frac(0, 1) : Frac(2, 1) * p * r / (p + r);
    ps = ps + p;
    rs = rs + r;
    fs = fs + f;
  }
  out.precision = ps / Frac(3, 1);
  out.recall = rs / Frac(3, 1);
  out.f1 = fs / Frac(3, 1);
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace oracle
