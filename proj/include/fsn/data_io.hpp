#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fsn/errors.hpp"
#include "fsn/model.hpp"

namespace fsn {

struct SparseEntry {
  int index;  // 1-based, as in the file
  double value;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// A LibSVM file as read: rows in file order, indices strictly increasing.
struct RawDataset {
  std::vector<std::vector<SparseEntry>> rows;
  std::vector<double> labels;
  int max_index = 0;

  std::size_t size() const { return rows.size(); }
  friend bool operator==(const RawDataset&, const RawDataset&) = default;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Parses `<label> (<idx>:<val>)*` lines; `#` starts a comment.
RawDataset parse_libsvm(std::istream& in);
RawDataset parse_libsvm(const std::string& text);
RawDataset read_libsvm_file(const std::filesystem::path& path);

/// Writes with shortest round-trip float formatting.
void write_libsvm(std::ostream& out, const RawDataset& data);

struct PreprocessOptions {
  bool add_intercept = true;
  bool map_labels = true;
};

struct Dataset {
  SparseRows<double> rows;  // 0-based columns
  VectorX<double> labels;
  Index d = 0;
};

/// Intercept as the last coordinate (value 1.0); smallest label to -1 and
/// largest to +1 when mapping.
Dataset preprocess(const RawDataset& raw, const PreprocessOptions& opts = {});

GlmProblem<double> make_problem(Dataset data, Loss loss, const Regularizer<double>& reg);

/// Planted logistic model: rows i.i.d. N(0, I) * margin_scale / sqrt(d),
/// labels sign(<a_i, w_star>) with 5% random flips, L2 weight 1/n.
GlmProblem<double> synth_logistic(Index n, Index d, std::uint64_t seed,
                                  double margin_scale = 1.0);

}  // namespace fsn
