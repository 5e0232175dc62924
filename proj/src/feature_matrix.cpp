#include "citeimpact/feature_matrix.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "citeimpact/error.hpp"
#include "citeimpact/text_io.hpp"

namespace citeimpact {

static_assert(std::endian::native == std::endian::little,
              "feature matrix files are written in native little-endian layout");

FeatureMatrix::FeatureMatrix(std::vector<std::string> ids, std::size_t dimension)
    : ids_(std::move(ids)), dimension_(dimension), values_(ids_.size() * dimension, 0.0) {
  build_index();
}

FeatureMatrix::FeatureMatrix(std::vector<std::string> ids, std::size_t dimension,
                             std::vector<double> values)
    : ids_(std::move(ids)), dimension_(dimension), values_(std::move(values)) {
  if (values_.size() != ids_.size() * dimension_) {
    throw Error(ErrorKind::kDimension, "feature matrix holds " + std::to_string(values_.size()) +
                                           " values for " + std::to_string(ids_.size()) + " x " +
                                           std::to_string(dimension_));
  }
  build_index();
}

void FeatureMatrix::build_index() {
  index_.clear();
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate feature row id '" + ids_[i] + "'");
    }
  }
}

const double* FeatureMatrix::find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : values_.data() + it->second * dimension_;
}

std::ptrdiff_t FeatureMatrix::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

FeatureMatrix FeatureMatrix::select(std::span<const std::string> ids) const {
  FeatureMatrix out(std::vector<std::string>(ids.begin(), ids.end()), dimension_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* src = find(ids[i]);
    if (!src) throw Error(ErrorKind::kInvalidArgument, "no feature row for '" + ids[i] + "'");
    std::copy(src, src + dimension_, out.row(i).begin());
  }
  return out;
}

void save_feature_matrix(const FeatureMatrix& matrix, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const std::uint64_t header[2] = {matrix.rows(), matrix.dimension()};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(matrix.values().data()),
            static_cast<std::streamsize>(matrix.values().size() * sizeof(double)));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());

  std::string ids;
  for (const auto& id : matrix.ids()) ids += id + '\n';
  write_file(path.string() + ".ids", ids);
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::uint64_t header[2] = {0, 0};
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in) throw Error(ErrorKind::kParse, path.string() + ": truncated header");
  std::vector<double> values(header[0] * header[1]);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!in || in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::kParse, path.string() + ": payload does not match header");
  }

  const auto id_text = read_file(path.string() + ".ids");
  std::vector<std::string> ids;
  std::size_t start = 0;
  while (start < id_text.size()) {
    const auto end = id_text.find('\n', start);
    if (end == std::string::npos) {
      ids.push_back(id_text.substr(start));
      break;
    }
    ids.push_back(id_text.substr(start, end - start));
    start = end + 1;
  }
  if (ids.size() != header[0]) {
    throw Error(ErrorKind::kParse, path.string() + ".ids lists " + std::to_string(ids.size()) +
                                       " ids for " + std::to_string(header[0]) + " rows");
  }
  return FeatureMatrix(std::move(ids), header[1], std::move(values));
}

}  // namespace citeimpact
