#include "fsn/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>

#include "fsn/random.hpp"

namespace fsn {

ParseError::ParseError(const std::string& what, std::size_t line, std::size_t column)
    : DataError("line " + std::to_string(line) + ", column " + std::to_string(column) +
                ": " + what),
      line_(line),
      column_(column) {}

namespace {

bool parse_double(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size() && std::isfinite(out);
}

bool parse_int(std::string_view token, int& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

}  // namespace

RawDataset parse_libsvm(std::istream& in) {
  RawDataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos)
      view = view.substr(0, hash);

    std::vector<SparseEntry> row;
    bool have_label = false;
    double label = 0.0;
    std::size_t pos = 0;
    while (pos < view.size()) {
      while (pos < view.size() && is_space(view[pos])) ++pos;
      if (pos >= view.size()) break;
      const std::size_t start = pos;
      while (pos < view.size() && !is_space(view[pos])) ++pos;
      const std::string_view token = view.substr(start, pos - start);
      const std::size_t column = start + 1;

      if (!have_label) {
        if (!parse_double(token, label))
          throw ParseError("malformed label '" + std::string(token) + "'", line_no, column);
        have_label = true;
        continue;
      }
      const auto colon = token.find(':');
      if (colon == std::string_view::npos)
        throw ParseError("expected <index>:<value>, got '" + std::string(token) + "'",
                         line_no, column);
      SparseEntry entry{};
      if (!parse_int(token.substr(0, colon), entry.index))
        throw ParseError("malformed feature index '" + std::string(token) + "'", line_no,
                         column);
      if (entry.index < 1)
        throw ParseError("feature index must be >= 1", line_no, column);
      if (!parse_double(token.substr(colon + 1), entry.value))
        throw ParseError("malformed feature value '" + std::string(token) + "'", line_no,
                         column + colon + 1);
      if (!row.empty() && entry.index <= row.back().index)
        throw ParseError("feature indices must be strictly increasing", line_no, column);
      row.push_back(entry);
    }
    if (!have_label) continue;  // blank or comment-only line
    if (!row.empty()) data.max_index = std::max(data.max_index, row.back().index);
    data.labels.push_back(label);
    data.rows.push_back(std::move(row));
  }
  if (in.bad()) throw DataError("I/O error while reading LibSVM data");
  return data;
}

RawDataset parse_libsvm(const std::string& text) {
  std::istringstream in(text);
  return parse_libsvm(in);
}

RawDataset read_libsvm_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path.string() + "'");
  return parse_libsvm(in);
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void write_libsvm(std::ostream& out, const RawDataset& data) {
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    out << format_double(data.labels[i]);
    for (const auto& e : data.rows[i]) out << ' ' << e.index << ':' << format_double(e.value);
    out << '\n';
  }
}

Dataset preprocess(const RawDataset& raw, const PreprocessOptions& opts) {
  const auto n = static_cast<Index>(raw.rows.size());
  if (n == 0) throw DataError("dataset has no rows");
  const Index d = raw.max_index + (opts.add_intercept ? 1 : 0);
  if (d < 1) throw DataError("dataset has no features");

  Dataset out;
  out.d = d;
  out.labels.resize(n);
  if (opts.map_labels) {
    const std::set<double> distinct(raw.labels.begin(), raw.labels.end());
    if (distinct.size() != 2)
      throw DataError("label mapping needs exactly two distinct labels, found " +
                      std::to_string(distinct.size()));
    const double low = *distinct.begin();
    for (Index i = 0; i < n; ++i) out.labels(i) = raw.labels[i] == low ? -1.0 : 1.0;
  } else {
    for (Index i = 0; i < n; ++i) out.labels(i) = raw.labels[i];
  }

  std::vector<Eigen::Triplet<double, int>> triplets;
  std::size_t nnz = 0;
  for (const auto& row : raw.rows) nnz += row.size();
  triplets.reserve(nnz + (opts.add_intercept ? n : 0));
  for (Index i = 0; i < n; ++i) {
    for (const auto& e : raw.rows[i])
      triplets.emplace_back(static_cast<int>(i), e.index - 1, e.value);
    if (opts.add_intercept) triplets.emplace_back(static_cast<int>(i), d - 1, 1.0);
  }
  out.rows.resize(n, d);
  out.rows.setFromTriplets(triplets.begin(), triplets.end());
  out.rows.makeCompressed();
  return out;
}

GlmProblem<double> make_problem(Dataset data, Loss loss, const Regularizer<double>& reg) {
  return GlmProblem<double>(std::move(data.rows), std::move(data.labels), loss, reg);
}

GlmProblem<double> synth_logistic(Index n, Index d, std::uint64_t seed,
                                  double margin_scale) {
  if (n < 2 || d < 1) throw ConfigError("synth_logistic: need n >= 2 and d >= 1");
  Rng rng(seed);
  VectorX<double> w_star(d);
  for (Index j = 0; j < d; ++j) w_star(j) = standard_normal(rng);

  const double scale = margin_scale / std::sqrt(static_cast<double>(d));
  MatrixX<double> a(n, d);
  VectorX<double> labels(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) a(i, j) = scale * standard_normal(rng);
    double y = a.row(i).dot(w_star) >= 0.0 ? 1.0 : -1.0;
    if (bernoulli(rng, 0.05)) y = -y;
    labels(i) = y;
  }
  return fsn::make_problem(a, std::move(labels), Loss::logistic(),
                           Regularizer<double>::l2(1.0 / static_cast<double>(n)));
}

}  // namespace fsn
