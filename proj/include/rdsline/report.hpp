#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rdsline/errors.hpp"

namespace rdsline {

/// 64-bit FNV-1a, used as the config hash in reports.
constexpr std::uint64_t fnv1a64(std::string_view data) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

/// Shortest round-trip representation.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& p, std::string_view content) {
  std::filesystem::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  void add(const std::vector<double>& values) {
    std::vector<std::string> cells;
    for (double v : values) cells.push_back(format_double(v));
    row(cells);
  }

  const std::string& str() const { return text_; }

 private:
  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw Error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  std::size_t columns_;
  std::string text_;
};

struct SvgSeries {
  std::string name;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
  bool steps = false;
};

/// Minimal line chart.
inline std::string svg_plot(const std::string& title, const std::vector<SvgSeries>& series) {
  const double W = 640, H = 400, L = 60, R = 20, T = 40, B = 40;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (!(xmin < xmax)) xmax = xmin + 1;
  if (!(ymin < ymax)) ymax = ymin + 1;
  auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\">\n";
  out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  out += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" + title +
         "</text>\n";
  out += "<polyline fill=\"none\" stroke=\"black\" points=\"" + format_double(L) + "," + format_double(T) + " " +
         format_double(L) + "," + format_double(H - B) + " " + format_double(W - R) + "," + format_double(H - B) +
         "\"/>\n";
  auto label = [&](double x, double y, const std::string& text, const char* anchor,
                   const std::string& color = "black") {
    out += "<text x=\"" + format_double(x) + "\" y=\"" + format_double(y) + "\" text-anchor=\"" + anchor +
           "\" fill=\"" + color + "\" font-family=\"sans-serif\" font-size=\"11\">" + text + "</text>\n";
  };
  label(L, H - B + 16, format_double(xmin), "middle");
  label(W - R, H - B + 16, format_double(xmax), "middle");
  label(L - 6, H - B, format_double(ymin), "end");
  label(L - 6, T + 4, format_double(ymax), "end");
  double legend_y = T + 14;
  for (const auto& s : series) {
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (s.steps && i > 0) out += format_double(px(s.x[i])) + "," + format_double(py(s.y[i - 1])) + " ";
      out += format_double(px(s.x[i])) + "," + format_double(py(s.y[i])) + " ";
    }
    out += "\"/>\n";
    label(W - R - 4, legend_y, s.name, "end", s.color);
    legend_y += 14;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace rdsline
