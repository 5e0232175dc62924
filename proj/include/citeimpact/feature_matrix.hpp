#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace citeimpact {

// Row-major dense matrix with one row per paper id.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::vector<std::string> ids, std::size_t dimension);
  FeatureMatrix(std::vector<std::string> ids, std::size_t dimension, std::vector<double> values);

  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::span<double> row(std::size_t i) { return {values_.data() + i * dimension_, dimension_}; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * dimension_, dimension_};
  }
  // Null when the id has no row.
  const double* find(const std::string& id) const;
  std::ptrdiff_t index_of(const std::string& id) const;

  // Subset of rows in the given order.
  FeatureMatrix select(std::span<const std::string> ids) const;

  bool operator==(const FeatureMatrix& other) const {
    return ids_ == other.ids_ && dimension_ == other.dimension_ && values_ == other.values_;
  }

 private:
  void build_index();

  std::vector<std::string> ids_;
  std::size_t dimension_ = 0;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binary: uint64 count, uint64 dimension (little endian), then row-major
// float64. Ids go to a sidecar "<path>.ids", one per line.
void save_feature_matrix(const FeatureMatrix& matrix, const std::filesystem::path& path);
FeatureMatrix load_feature_matrix(const std::filesystem::path& path);

}  // namespace citeimpact
