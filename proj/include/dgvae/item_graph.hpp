#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "dgvae/error.hpp"
#include "dgvae/ingestion.hpp"
#include "dgvae/numerics/binary_io.hpp"
#include "dgvae/numerics/functions.hpp"
#include "dgvae/numerics/parallel.hpp"
#include "dgvae/numerics/tensor.hpp"

namespace dgvae {

struct KnnOptions {
  std::size_t k = 10;
  std::size_t block_rows = 256;  // rows of the similarity matrix held at once
  std::size_t threads = 0;       // 0 = thread_count()
};

// Row-wise top-k over cosine similarity. Every selected entry is 1. Zero-norm
// rows get no out-edges and are never chosen as neighbours. Ties go to the lower
// column index. Only block_rows x N similarities exist at any moment.
inline SparseMatrix knn_binarize(const DenseTensor& x, KnnOptions opt, std::vector<std::string>* warnings = nullptr) {
  const std::size_t n = x.rows(), dim = x.cols();
  if (opt.k == 0) throw ConfigError("knn_binarize: k must be >= 1");
  if (opt.block_rows == 0) throw ConfigError("knn_binarize: block_rows must be >= 1");
  std::size_t k = opt.k;
  if (k > n) {
    if (warnings) warnings->push_back("k=" + std::to_string(k) + " exceeds item count " + std::to_string(n) + "; clamped");
    k = n;
  }

  DenseTensor unit = x;
  std::vector<char> live(n, 0);
  std::size_t dead = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = unit.row(i);
    if (l2_norm(row) < kNormEpsilon) {
      ++dead;
      continue;
    }
    live[i] = 1;
    l2_normalize_inplace(row);
  }
  if (dead && warnings) warnings->push_back(std::to_string(dead) + " item(s) with zero embedding get no graph edges");

  std::vector<std::vector<std::uint32_t>> picks(n);
  const std::size_t threads = opt.threads ? opt.threads : thread_count();
  std::vector<double> sim;
  std::vector<std::uint32_t> order;
  for (std::size_t lo = 0; lo < n; lo += opt.block_rows) {
    const std::size_t hi = std::min(n, lo + opt.block_rows);
    sim.assign((hi - lo) * n, 0.0);
    parallel_for(
        hi - lo,
        [&](std::size_t b) {
          const std::size_t i = lo + b;
          if (!live[i]) return;
          const double* xi = &unit(i, 0);
          double* out = sim.data() + b * n;
          for (std::size_t j = 0; j < n; ++j) {
            const double* xj = &unit(j, 0);
            double s = 0.0;
            for (std::size_t c = 0; c < dim; ++c) s += xi[c] * xj[c];
            out[j] = s;
          }
        },
        threads);
    parallel_for(
        hi - lo,
        [&](std::size_t b) {
          const std::size_t i = lo + b;
          if (!live[i]) return;
          const double* s = sim.data() + b * n;
          std::vector<std::uint32_t> cand;
          cand.reserve(n);
          for (std::size_t j = 0; j < n; ++j)
            if (live[j]) cand.push_back(static_cast<std::uint32_t>(j));
          const std::size_t take = std::min(k, cand.size());
          std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(),
                            [&](std::uint32_t a, std::uint32_t c) { return s[a] > s[c] || (s[a] == s[c] && a < c); });
          cand.resize(take);
          picks[i] = std::move(cand);
        },
        threads);
  }

  std::vector<Triplet> t;
  t.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (auto j : picks[i]) t.push_back({static_cast<std::uint32_t>(i), j, 1.0});
  return SparseMatrix::from_triplets(n, n, t);
}

// out_ij = s_ij / sqrt(d_i d_j) with d the row sums. Entries touching a zero-degree
// row are dropped.
inline SparseMatrix symmetric_normalize(const SparseMatrix& s) {
  if (s.rows() != s.cols()) throw ShapeError("symmetric_normalize: matrix must be square, got " +
                                             std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
  std::vector<double> deg(s.rows(), 0.0);
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (double v : s.row_values(i)) {
      if (v < 0.0) throw NumericError("symmetric_normalize: negative entry");
      deg[i] += v;
    }
  std::vector<Triplet> out;
  out.reserve(s.nnz());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    auto cols = s.row_cols(i);
    auto vals = s.row_values(i);
    for (std::size_t p = 0; p < cols.size(); ++p) {
      const double d = deg[i] * deg[cols[p]];
      if (d > 0.0) out.push_back({static_cast<std::uint32_t>(i), cols[p], vals[p] / std::sqrt(d)});
    }
  }
  return SparseMatrix::from_triplets(s.rows(), s.cols(), out);
}

struct ModalityGraph {
  Modality modality = Modality::kVisual;
  SparseMatrix normalized;
};

inline ModalityGraph build_modality_graph(const ModalityEmbeddings& e, const KnnOptions& opt,
                                          std::vector<std::string>* warnings = nullptr) {
  return {e.modality, symmetric_normalize(knn_binarize(e.features, opt, warnings))};
}

inline constexpr char kGraphMagic[] = "DGVAEGRF";
inline constexpr std::uint32_t kGraphVersion = 1;

// Fused item-item graph. Immutable once built: only const access is exposed.
class ItemGraph {
 public:
  ItemGraph() = default;
  ItemGraph(SparseMatrix s, std::vector<double> alphas, std::uint32_t k)
      : s_(std::move(s)), alphas_(std::move(alphas)), k_(k) {
    if (s_.rows() != s_.cols()) throw ShapeError("ItemGraph: matrix must be square");
    double total = 0.0;
    for (double a : alphas_) {
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("ItemGraph: modality weights must lie in [0, 1]");
      total += a;
    }
    if (!alphas_.empty() && std::abs(total - 1.0) > 1e-12) throw ConfigError("ItemGraph: modality weights must sum to 1");
  }

  static ItemGraph identity(std::size_t n) { return ItemGraph(SparseMatrix::identity(n), {}, 0); }

  const SparseMatrix& matrix() const noexcept { return s_; }
  const std::vector<double>& alphas() const noexcept { return alphas_; }
  std::uint32_t k() const noexcept { return k_; }
  std::size_t num_items() const noexcept { return s_.rows(); }

  bool operator==(const ItemGraph&) const = default;

 private:
  SparseMatrix s_;
  std::vector<double> alphas_;
  std::uint32_t k_ = 0;
};

// S = sum_m alpha_m * S~^m over the given graphs, alphas in the same order.
inline ItemGraph fuse_modalities(const std::vector<ModalityGraph>& graphs, const std::vector<double>& alphas,
                                 std::uint32_t k) {
  if (graphs.empty() || graphs.size() != alphas.size())
    throw ConfigError("fuse_modalities: need one weight per modality graph");
  const std::size_t n = graphs.front().normalized.rows();
  std::vector<Triplet> all;
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    const auto& g = graphs[m].normalized;
    if (g.rows() != n || g.cols() != n)
      throw ShapeError("fuse_modalities: modality graphs disagree on item count (" + std::to_string(n) + " vs " +
                       std::to_string(g.rows()) + ")");
    for (auto t : g.triplets()) {
      t.value *= alphas[m];
      all.push_back(t);
    }
  }
  return ItemGraph(SparseMatrix::from_triplets(n, n, all), alphas, k);
}

// Two-modality convenience: alpha_t = 1 - alpha_v.
inline ItemGraph fuse_modalities(const ModalityGraph& visual, const ModalityGraph& textual, double alpha_v,
                                 std::uint32_t k) {
  if (!(alpha_v >= 0.0 && alpha_v <= 1.0)) throw ConfigError("alpha_v must lie in [0, 1]");
  return fuse_modalities({visual, textual}, {alpha_v, 1.0 - alpha_v}, k);
}

inline ItemGraph build_item_graph(const ModalityEmbeddings& visual, const ModalityEmbeddings& textual, double alpha_v,
                                  const KnnOptions& opt, std::vector<std::string>* warnings = nullptr) {
  if (visual.num_items() != textual.num_items())
    throw ShapeError("visual and textual embeddings disagree on item count");
  const auto k = static_cast<std::uint32_t>(std::min(opt.k, visual.num_items()));
  return fuse_modalities(build_modality_graph(visual, opt, warnings), build_modality_graph(textual, opt, nullptr),
                         alpha_v, k);
}

inline void save_graph(std::ostream& out, const ItemGraph& g) {
  out.write(kGraphMagic, 8);
  bin::put_u32(out, kGraphVersion);
  bin::put_u64(out, g.num_items());
  bin::put_u32(out, g.k());
  bin::put_u32(out, static_cast<std::uint32_t>(g.alphas().size()));
  for (double a : g.alphas()) bin::put_f64(out, a);
  const auto t = g.matrix().triplets();
  bin::put_u64(out, t.size());
  for (const auto& e : t) {
    bin::put_u32(out, e.row);
    bin::put_u32(out, e.col);
    bin::put_f64(out, e.value);
  }
}

inline ItemGraph load_graph(std::istream& in, const std::string& source = "<graph>") {
  bin::Reader r(in, source);
  r.expect_magic(std::string_view(kGraphMagic, 8));
  const auto version = r.u32();
  if (version != kGraphVersion)
    throw FormatError(source + ": unsupported graph version " + std::to_string(version));
  const auto n = r.u64();
  if (n == 0 || n > (1ull << 31)) throw FormatError(source + ": bad item count");
  const auto k = r.u32();
  const auto na = r.u32();
  if (na > 16) throw FormatError(source + ": bad modality count");
  std::vector<double> alphas(na);
  for (auto& a : alphas) a = r.f64();
  const auto nnz = r.u64();
  if (nnz > n * n) throw FormatError(source + ": bad entry count");
  std::vector<Triplet> t(nnz);
  for (auto& e : t) {
    e.row = r.u32();
    e.col = r.u32();
    e.value = r.f64();
  }
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after graph");
  try {
    return ItemGraph(SparseMatrix::from_triplets(n, n, t), std::move(alphas), k);
  } catch (const Error& e) {
    throw FormatError(source + ": corrupt graph: " + e.what());
  }
}

inline void save_graph(const std::filesystem::path& path, const ItemGraph& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  save_graph(out, g);
  if (!out) throw IoError("write failed: " + path.string());
}

inline ItemGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return load_graph(in, path.string());
}

}  // namespace dgvae
