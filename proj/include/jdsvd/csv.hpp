#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "jdsvd/solver.hpp"

namespace jdsvd {

// Shortest decimal form that round-trips a double (17 significant digits).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// One checked inequality at one instrumented iteration.
struct VerificationRow {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  bool hypothesis_met = false;
};

namespace detail {

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline void finish_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

inline void put_u64_le(std::ofstream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_f64_le(std::ofstream& out, double v) {
  put_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

}  // namespace detail

inline void write_history_csv(const std::string& path,
                              const std::vector<HistoryRecord>& history) {
  std::ofstream out = detail::open_out(path, std::ios::out);
  out << "outer,triplet,m,theta,resnorm,inner_iters,eta,r_in,hit_cap,secs\n";
  for (const HistoryRecord& row : history) {
    out << row.outer << ',' << row.triplet << ',' << row.m << ','
        << format_double(row.theta) << ',' << format_double(row.resnorm) << ','
        << row.inner_iters << ',' << format_double(row.eta) << ','
        << format_double(row.r_in) << ',' << (row.hit_cap ? 1 : 0) << ','
        << format_double(row.secs) << '\n';
  }
  detail::finish_out(out, path);
}

// One row per triplet, ordered as in the result (distance from the target,
// closest first); index is that 1-based rank.
inline void write_result_csv(const std::string& path,
                             const std::vector<ApproxTriplet>& triplets) {
  std::ofstream out = detail::open_out(path, std::ios::out);
  out << "index,theta,resnorm\n";
  for (std::size_t i = 0; i < triplets.size(); ++i)
    out << (i + 1) << ',' << format_double(triplets[i].theta) << ','
        << format_double(triplets[i].resnorm) << '\n';
  detail::finish_out(out, path);
}

inline void write_verification_csv(const std::string& path,
                                   const std::vector<VerificationRow>& rows) {
  std::ofstream out = detail::open_out(path, std::ios::out);
  out << "name,lhs,rhs,pass,hypothesis_met\n";
  for (const VerificationRow& row : rows)
    out << row.name << ',' << format_double(row.lhs) << ',' << format_double(row.rhs)
        << ',' << (row.pass ? 1 : 0) << ',' << (row.hypothesis_met ? 1 : 0) << '\n';
  detail::finish_out(out, path);
}

// Binary dump of the singular vectors, all fields little-endian: a 64-bit
// triplet count, then per triplet the length-prefixed left vector (64-bit
// length, that many 64-bit floats) followed by the length-prefixed right
// vector.
inline void write_vector_dump(const std::string& path,
                              const std::vector<ApproxTriplet>& triplets) {
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  detail::put_u64_le(out, triplets.size());
  for (const ApproxTriplet& t : triplets) {
    detail::put_u64_le(out, t.u.size());
    for (double x : t.u) detail::put_f64_le(out, x);
    detail::put_u64_le(out, t.v.size());
    for (double x : t.v) detail::put_f64_le(out, x);
  }
  detail::finish_out(out, path);
}

}  // namespace jdsvd
