#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "twoview/errors.hpp"
#include "twoview/geometry.hpp"

namespace twoview {

/// 17 significant digits: lossless text round-trip for binary64.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& tok, const std::string& where) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    raise(Errc::ParseError, where + ": bad number '" + tok + "'");
  return v;
}

// --- F-matrix text format: 9 whitespace-separated decimals, row-major,
// --- line breaks after entries 3 and 6.

inline std::string fmat_to_text(const FMat& f) {
  std::string out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out += format_double(f.m(i, j));
      out += (j == 2) ? '\n' : ' ';
    }
  }
  return out;
}

inline FMat fmat_from_text(const std::string& text) {
  std::istringstream in(text);
  Mat3 m;
  std::string tok;
  for (int k = 0; k < 9; ++k) {
    if (!(in >> tok))
      raise(Errc::ParseError, "F-matrix text: expected 9 values, got " +
                                  std::to_string(k));
    m(k / 3, k % 3) = parse_double(tok, "F-matrix text");
  }
  if (in >> tok)
    raise(Errc::ParseError, "F-matrix text: trailing token '" + tok + "'");
  return FMat(m);
}

inline void write_fmat(const std::string& path, const FMat& f) {
  std::ofstream out(path);
  if (!out) raise(Errc::ParseError, "cannot open for writing: " + path);
  out << fmat_to_text(f);
}

inline FMat read_fmat(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::ParseError, "cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return fmat_from_text(ss.str());
}

// --- Correspondence file: header `x1,y1,x2,y2[,label]`, one pair per line.

inline std::string corrset_to_text(const CorrSet& corrs) {
  std::string out = corrs.labeled() ? "x1,y1,x2,y2,label\n" : "x1,y1,x2,y2\n";
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const auto& c = corrs.pairs[i];
    out += format_double(c.p.x) + "," + format_double(c.p.y) + "," +
           format_double(c.q.x) + "," + format_double(c.q.y);
    if (corrs.labeled()) out += "," + std::to_string(int(corrs.labels[i]));
    out += "\n";
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline CorrSet corrset_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    raise(Errc::ParseError, "correspondence file: empty");
  auto header = split_csv_line(line);
  bool labeled;
  if (header.size() == 5 && header[4] == "label")
    labeled = true;
  else if (header.size() == 4)
    labeled = false;
  else
    raise(Errc::ParseError,
          "correspondence file: header must be x1,y1,x2,y2[,label]");

  CorrSet corrs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    const std::string where =
        "correspondence file line " + std::to_string(lineno);
    if (f.size() != (labeled ? 5u : 4u))
      raise(Errc::ParseError, where + ": wrong field count");
    Correspondence c;
    c.p = HomoPoint(parse_double(f[0], where), parse_double(f[1], where));
    c.q = HomoPoint(parse_double(f[2], where), parse_double(f[3], where));
    corrs.pairs.push_back(c);
    if (labeled) {
      if (f[4] != "0" && f[4] != "1")
        raise(Errc::ParseError, where + ": label must be 0 or 1");
      corrs.labels.push_back(f[4] == "1");
    }
  }
  if (corrs.empty()) raise(Errc::ParseError, "correspondence file: no pairs");
  return corrs;
}

inline void write_corrset(const std::string& path, const CorrSet& corrs) {
  std::ofstream out(path);
  if (!out) raise(Errc::ParseError, "cannot open for writing: " + path);
  out << corrset_to_text(corrs);
}

inline CorrSet read_corrset(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::ParseError, "cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return corrset_from_text(ss.str());
}

// --- Calibration file: lines `P1:` / `P2:`, each followed by 12 row-major
// --- values for the 3x4 projection matrix.

using Mat34 = Eigen::Matrix<double, 3, 4>;

inline std::string calibration_to_text(const Mat34& p1, const Mat34& p2) {
  auto one = [](const char* tag, const Mat34& p) {
    std::string s = tag;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) s += " " + format_double(p(i, j));
    return s + "\n";
  };
  return one("P1:", p1) + one("P2:", p2);
}

inline std::pair<Mat34, Mat34> calibration_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  auto read_one = [&](const char* tag) {
    if (!(in >> tok) || tok != tag)
      raise(Errc::ParseError,
            std::string("calibration file: expected '") + tag + "'");
    Mat34 p;
    for (int k = 0; k < 12; ++k) {
      if (!(in >> tok))
        raise(Errc::ParseError, "calibration file: expected 12 values per camera");
      p(k / 4, k % 4) = parse_double(tok, "calibration file");
    }
    return p;
  };
  Mat34 p1 = read_one("P1:");
  Mat34 p2 = read_one("P2:");
  if (in >> tok)
    raise(Errc::ParseError, "calibration file: trailing token '" + tok + "'");
  return {p1, p2};
}

inline void write_calibration(const std::string& path, const Mat34& p1,
                              const Mat34& p2) {
  std::ofstream out(path);
  if (!out) raise(Errc::ParseError, "cannot open for writing: " + path);
  out << calibration_to_text(p1, p2);
}

inline std::pair<Mat34, Mat34> read_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::ParseError, "cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return calibration_from_text(ss.str());
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) raise(Errc::ParseError, "cannot open for writing: " + path);
  out << text;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::ParseError, "cannot open: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace twoview
