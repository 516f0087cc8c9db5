#pragma once

#include <array>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "l2g/common.hpp"

namespace l2g {

/// Node coordinates plus the row <-> external-id bijection.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  EmbeddingMatrix(Matrix coords, std::vector<NodeId> ids) : coords_(std::move(coords)), ids_(std::move(ids)) {
    if (coords_.rows() != static_cast<Eigen::Index>(ids_.size())) {
      fail_data("embedding row count does not match id count");
    }
    if (!coords_.allFinite()) fail_data("embedding contains non-finite coordinates");
    index_.reserve(ids_.size());
    for (Index i = 0; i < static_cast<Index>(ids_.size()); ++i) {
      if (!index_.emplace(ids_[i], i).second) {
        fail_data("duplicate node id " + std::to_string(ids_[i]) + " in embedding");
      }
    }
  }

  Index rows() const { return coords_.rows(); }
  Index dim() const { return coords_.cols(); }
  const Matrix& coords() const { return coords_; }
  const std::vector<NodeId>& ids() const { return ids_; }

  bool contains(NodeId id) const { return index_.count(id) > 0; }

  Index row_of(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail_data("embedding has no row for node id " + std::to_string(id));
    return it->second;
  }

  auto row(Index i) const { return coords_.row(i); }

 private:
  Matrix coords_;
  std::vector<NodeId> ids_;
  std::unordered_map<NodeId, Index> index_;
};

namespace detail {
inline constexpr std::array<char, 4> kEmbeddingMagic = {'L', '2', 'G', 'E'};
}

/// Binary format: "L2GE", u64 n, u64 d, n*d f64 row-major, n u64 node ids
/// (all little-endian).
inline void save_embedding_binary(const EmbeddingMatrix& emb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot write embedding: " + path.string());
  out.write(detail::kEmbeddingMagic.data(), 4);
  const std::uint64_t n = emb.rows(), d = emb.dim();
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&d), 8);
  out.write(reinterpret_cast<const char*>(emb.coords().data()), static_cast<std::streamsize>(n * d * 8));
  out.write(reinterpret_cast<const char*>(emb.ids().data()), static_cast<std::streamsize>(n * 8));
  if (!out) fail_data("short write: " + path.string());
}

/// Text format: first line "n d", then "node_id v1 ... vd" per node.
inline void save_embedding_text(const EmbeddingMatrix& emb, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write embedding: " + path.string());
  out << emb.rows() << ' ' << emb.dim() << '\n';
  char buf[32];
  for (Index i = 0; i < emb.rows(); ++i) {
    out << emb.ids()[i];
    for (Index j = 0; j < emb.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", emb.coords()(i, j));
      out << ' ' << buf;
    }
    out << '\n';
  }
}

/// Load either format; the binary magic is sniffed.
inline EmbeddingMatrix load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open embedding: " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() == 4 && magic == detail::kEmbeddingMagic) {
    std::uint64_t n = 0, d = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    in.read(reinterpret_cast<char*>(&d), 8);
    if (!in) fail_data("truncated embedding header: " + path.string());
    Matrix coords(n, d);
    in.read(reinterpret_cast<char*>(coords.data()), static_cast<std::streamsize>(n * d * 8));
    std::vector<NodeId> ids(n);
    in.read(reinterpret_cast<char*>(ids.data()), static_cast<std::streamsize>(n * 8));
    if (!in) fail_data("truncated embedding payload: " + path.string());
    return EmbeddingMatrix(std::move(coords), std::move(ids));
  }

  in.close();
  std::ifstream text(path);
  std::uint64_t n = 0, d = 0;
  if (!(text >> n >> d)) fail_data("malformed embedding header: " + path.string());
  Matrix coords(n, d);
  std::vector<NodeId> ids(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!(text >> ids[i])) fail_data(path.string() + ": malformed embedding row " + std::to_string(i));
    for (std::uint64_t j = 0; j < d; ++j) {
      if (!(text >> coords(i, j))) {
        fail_data(path.string() + ": malformed embedding row " + std::to_string(i));
      }
    }
  }
  return EmbeddingMatrix(std::move(coords), std::move(ids));
}

}  // namespace l2g
