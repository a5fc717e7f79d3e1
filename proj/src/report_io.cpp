#include "nfgp/backtest.hpp"
#include "nfgp/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nfgp::backtest {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_window_csv(const std::filesystem::path& path, const WalkForwardReport& report) {
  auto out = open_out(path);
  out << "window,strategy,V_Tk,log_V_Tk\n";
  for (std::size_t k = 0; k < report.windows.size(); ++k) {
    for (const auto& s : report.strategies) {
      const double v = s.terminal[k];
      out << fmt::format("{},{},{:.17g},{:.17g}\n", report.windows[k].index, s.name, v, std::log(v));
    }
  }
  finish(out, path);
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  out << "strategy,avg_log_relative_return,K\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{:.17g},{}\n", r.strategy, r.avg_log_relative_return, r.windows);
  }
  finish(out, path);
}

void write_plot_data(const std::filesystem::path& path, const WalkForwardReport& report) {
  auto out = open_out(path);
  out << "window";
  for (const auto& s : report.strategies) out << ',' << s.name;
  out << '\n';
  for (std::size_t k = 0; k < report.windows.size(); ++k) {
    out << report.windows[k].index;
    for (const auto& s : report.strategies) out << fmt::format(",{:.17g}", s.terminal[k]);
    out << '\n';
  }
  finish(out, path);
}

void write_svg(const std::filesystem::path& path, const WalkForwardReport& report,
               const std::string& title) {
  constexpr double kWidth = 900, kHeight = 480;
  constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
  constexpr std::array<const char*, 8> kColors{"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                               "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  const auto k_total = report.windows.size();
  double lo = 1.0, hi = 1.0;
  for (const auto& s : report.strategies) {
    for (double v : s.terminal) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double pad = std::max(1e-6, 0.05 * (hi - lo));
  lo -= pad;
  hi += pad;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](std::size_t k) {
    return kLeft + (k_total > 1 ? plot_w * static_cast<double>(k) / static_cast<double>(k_total - 1) : 0.0);
  };
  auto py = [&](double v) { return kTop + plot_h * (hi - v) / (hi - lo); };

  auto out = open_out(path);
  out << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)",
                     kWidth, kHeight)
      << '\n';
  out << fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)", kWidth, kHeight) << '\n';
  out << fmt::format(R"(<text x="{}" y="24" font-size="15">{}</text>)", kLeft, escape_xml(title)) << '\n';
  out << fmt::format(R"(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>)", kLeft,
                     kTop, plot_w, plot_h)
      << '\n';
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = lo + (hi - lo) * tick / 4.0;
    out << fmt::format(R"(<text x="{}" y="{:.1f}" text-anchor="end">{:.4f}</text>)", kLeft - 6, py(v) + 4, v)
        << '\n';
  }
  out << fmt::format(R"(<line x1="{}" y1="{:.1f}" x2="{}" y2="{:.1f}" stroke="#999" stroke-dasharray="4 3"/>)",
                     kLeft, py(1.0), kLeft + plot_w, py(1.0))
      << '\n';
  out << fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">window k</text>)", kLeft + plot_w / 2,
                     kHeight - 12)
      << '\n';
  for (std::size_t s = 0; s < report.strategies.size(); ++s) {
    const auto& strat = report.strategies[s];
    const char* color = kColors[s % kColors.size()];
    std::ostringstream points;
    for (std::size_t k = 0; k < k_total; ++k) {
      points << fmt::format("{:.1f},{:.1f} ", px(k), py(strat.terminal[k]));
    }
    out << fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>)", color,
                       points.str())
        << '\n';
    const double ly = kTop + 16.0 * static_cast<double>(s) + 8.0;
    out << fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>)",
                       kWidth - kRight + 12, ly, kWidth - kRight + 32, ly, color)
        << '\n';
    out << fmt::format(R"(<text x="{}" y="{}">{}</text>)", kWidth - kRight + 38, ly + 4,
                       escape_xml(strat.name))
        << '\n';
  }
  out << "</svg>\n";
  finish(out, path);
}

std::vector<SummaryFileRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open summary '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != "strategy,avg_log_relative_return,K") {
    throw DataError(fmt::format("'{}': unexpected summary header", path.string()));
  }
  std::vector<SummaryFileRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw DataError(fmt::format("'{}' line {}: expected 3 fields", path.string(), line_no));
    }
    SummaryFileRow r;
    r.strategy = line.substr(0, c1);
    r.avg_text = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string k_text = line.substr(c2 + 1);
    const auto [p1, e1] = std::from_chars(r.avg_text.data(), r.avg_text.data() + r.avg_text.size(), r.avg);
    const auto [p2, e2] = std::from_chars(k_text.data(), k_text.data() + k_text.size(), r.windows);
    if (e1 != std::errc() || p1 != r.avg_text.data() + r.avg_text.size() || e2 != std::errc() ||
        p2 != k_text.data() + k_text.size()) {
      throw DataError(fmt::format("'{}' line {}: malformed row", path.string(), line_no));
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError(fmt::format("'{}': summary has no rows", path.string()));
  return rows;
}

}  // namespace nfgp::backtest
