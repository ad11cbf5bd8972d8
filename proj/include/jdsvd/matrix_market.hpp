#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "jdsvd/sparse_matrix.hpp"

namespace jdsvd {

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    std::size_t pos = line.find_first_not_of(" \t\r\n");
    if (pos == std::string::npos) continue;
    if (line[pos] == '%') continue;
    return true;
  }
  return false;
}

}  // namespace detail

// Reads a MatrixMarket file: coordinate or array storage, real, integer or
// pattern fields, general or symmetric structure, 1-based indices. Symmetric
// inputs are materialized with mirrored off-diagonal entries. Duplicates sum.
inline SparseMatrix load_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file: " + path);

  std::string banner;
  if (!std::getline(in, banner)) throw IoError(path + ": empty file");
  std::istringstream hs(banner);
  std::string tag, object, storage, field, structure;
  hs >> tag >> object >> storage >> field >> structure;
  if (detail::lower(tag) != "%%matrixmarket" || detail::lower(object) != "matrix")
    throw IoError(path + ": not a MatrixMarket matrix file");
  storage = detail::lower(storage);
  field = detail::lower(field);
  structure = detail::lower(structure);
  if (storage != "coordinate" && storage != "array")
    throw IoError(path + ": unsupported storage format '" + storage + "'");
  if (field == "complex" || field == "hermitian")
    throw IoError(path + ": complex matrices are unsupported");
  const bool pattern = field == "pattern";
  if (!pattern && field != "real" && field != "integer")
    throw IoError(path + ": unsupported field '" + field + "'");
  const bool symmetric = structure == "symmetric";
  if (!symmetric && structure != "general")
    throw IoError(path + ": unsupported structure '" + structure + "'");
  if (pattern && storage == "array")
    throw IoError(path + ": pattern field requires coordinate storage");

  std::string line;
  if (!detail::next_data_line(in, line)) throw IoError(path + ": missing size line");
  std::istringstream ss(line);

  std::vector<SparseMatrix::Entry> entries;
  long long rows = 0, cols = 0;

  if (storage == "coordinate") {
    long long count = 0;
    if (!(ss >> rows >> cols >> count) || rows <= 0 || cols <= 0 || count < 0)
      throw IoError(path + ": malformed size line");
    if (symmetric && rows != cols)
      throw IoError(path + ": symmetric matrix must be square");
    entries.reserve(static_cast<std::size_t>(symmetric ? 2 * count : count));
    for (long long k = 0; k < count; ++k) {
      if (!detail::next_data_line(in, line))
        throw IoError(path + ": unexpected end of file in entry list");
      std::istringstream es(line);
      long long i = 0, j = 0;
      double value = 1.0;
      if (!(es >> i >> j)) throw IoError(path + ": malformed entry line");
      if (!pattern && !(es >> value)) throw IoError(path + ": entry missing value");
      if (i < 1 || i > rows || j < 1 || j > cols)
        throw IoError(path + ": entry index out of bounds");
      std::size_t r = static_cast<std::size_t>(i - 1);
      std::size_t c = static_cast<std::size_t>(j - 1);
      entries.push_back({r, c, value});
      if (symmetric && r != c) entries.push_back({c, r, value});
    }
  } else {
    if (!(ss >> rows >> cols) || rows <= 0 || cols <= 0)
      throw IoError(path + ": malformed size line");
    if (symmetric && rows != cols)
      throw IoError(path + ": symmetric matrix must be square");
    for (long long j = 0; j < cols; ++j) {
      long long i0 = symmetric ? j : 0;
      for (long long i = i0; i < rows; ++i) {
        if (!detail::next_data_line(in, line))
          throw IoError(path + ": unexpected end of file in array data");
        std::istringstream es(line);
        double value = 0.0;
        if (!(es >> value)) throw IoError(path + ": malformed array value");
        if (value != 0.0) {
          std::size_t r = static_cast<std::size_t>(i);
          std::size_t c = static_cast<std::size_t>(j);
          entries.push_back({r, c, value});
          if (symmetric && r != c) entries.push_back({c, r, value});
        }
      }
    }
  }

  return SparseMatrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols),
                      std::move(entries));
}

}  // namespace jdsvd
