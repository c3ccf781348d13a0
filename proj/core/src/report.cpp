#include "cascal/report.hpp"

#include <cstdio>

namespace cascal {

std::string format_fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

std::string bins_to_csv(const BinStats& stats) {
  std::string out = "bin_lo,bin_hi,count,conf,acc\n";
  for (std::size_t b = 0; b < stats.bins; ++b) {
    out += format_fixed(stats.lower(b), 6) + ',' + format_fixed(stats.upper(b), 6) + ',' +
           std::to_string(stats.count[b]) + ',' + format_fixed(stats.conf[b], 8) + ',' +
           format_fixed(stats.acc[b], 8) + '\n';
  }
  return out;
}

namespace {

std::string escape_xml(std::string_view text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string reliability_svg(const BinStats& stats, std::string_view title) {
  constexpr double kSize = 400.0;
  constexpr double kMargin = 50.0;
  const double plot = kSize - 2 * kMargin;
  auto x_of = [&](double v) { return kMargin + v * plot; };
  auto y_of = [&](double v) { return kSize - kMargin - v * plot; };

  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" "
      "viewBox=\"0 0 400 400\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"400\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"200\" y=\"25\" text-anchor=\"middle\" font-size=\"14\">" +
         escape_xml(title) + " (ECE " + format_fixed(100.0 * ece_from_bins(stats), 2) +
         "%)</text>\n";
  svg += "<rect x=\"" + format_fixed(kMargin, 1) + "\" y=\"" + format_fixed(kMargin, 1) +
         "\" width=\"" + format_fixed(plot, 1) + "\" height=\"" + format_fixed(plot, 1) +
         "\" fill=\"none\" stroke=\"black\"/>\n";

  const double width = plot / static_cast<double>(stats.bins);
  for (std::size_t b = 0; b < stats.bins; ++b) {
    if (stats.count[b] == 0) continue;
    const double x = x_of(stats.lower(b));
    const double top = y_of(stats.acc[b]);
    svg += "<rect x=\"" + format_fixed(x, 2) + "\" y=\"" + format_fixed(top, 2) +
           "\" width=\"" + format_fixed(width, 2) + "\" height=\"" +
           format_fixed(y_of(0.0) - top, 2) +
           "\" fill=\"#4c72b0\" stroke=\"#1f3b66\" fill-opacity=\"0.8\"/>\n";
    svg += "<circle cx=\"" + format_fixed(x + width / 2, 2) + "\" cy=\"" +
           format_fixed(y_of(stats.conf[b]), 2) + "\" r=\"3\" fill=\"#dd8452\"/>\n";
  }
  svg += "<line x1=\"" + format_fixed(x_of(0), 1) + "\" y1=\"" + format_fixed(y_of(0), 1) +
         "\" x2=\"" + format_fixed(x_of(1), 1) + "\" y2=\"" + format_fixed(y_of(1), 1) +
         "\" stroke=\"gray\" stroke-dasharray=\"4,4\"/>\n";
  svg += "<text x=\"200\" y=\"390\" text-anchor=\"middle\" font-size=\"12\">confidence</text>\n";
  svg += "<text x=\"15\" y=\"200\" text-anchor=\"middle\" font-size=\"12\" "
         "transform=\"rotate(-90 15 200)\">accuracy</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace cascal
