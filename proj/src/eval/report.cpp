#include "ctsel/eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ctsel/common/error.hpp"

namespace ctsel::eval {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 190, kTop = 30, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace

std::string render_lambda_svg(const std::vector<SummaryRow>& rows) {
  std::map<std::string, std::vector<const SummaryRow*>> series;
  std::vector<std::string> names;
  double lo_pos = std::numeric_limits<double>::infinity(), hi_pos = 0.0;
  double y_lo = std::numeric_limits<double>::infinity(), y_hi = -std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    const std::string name = r.dataset + " / " + r.method + " / " + r.constraint;
    if (!series.count(name)) names.push_back(name);
    series[name].push_back(&r);
    if (r.lambda > 0.0) {
      lo_pos = std::min(lo_pos, r.lambda);
      hi_pos = std::max(hi_pos, r.lambda);
    }
    y_lo = std::min(y_lo, r.rmse_selection.mean - r.rmse_selection.stderr_);
    y_hi = std::max(y_hi, r.rmse_selection.mean + r.rmse_selection.stderr_);
  }
  if (rows.empty()) {
    y_lo = 0.0;
    y_hi = 1.0;
  }
  if (!(y_hi > y_lo)) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  const bool has_pos = hi_pos > 0.0;
  const double log_lo = has_pos ? std::log10(lo_pos) : 0.0;
  const double log_hi = has_pos ? std::max(std::log10(hi_pos), log_lo + 1.0) : 1.0;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  // Zero is pinned at the left edge; positive lambdas fill the remaining 90%.
  auto x_of = [&](double lambda) {
    if (lambda <= 0.0 || !has_pos) return kLeft;
    return kLeft + plot_w * (0.1 + 0.9 * (std::log10(lambda) - log_lo) / (log_hi - log_lo));
  };
  auto y_of = [&](double v) { return kTop + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo)); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
    << kTop + plot_h << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / 4.0;
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  s << "<text x=\"" << kLeft << "\" y=\"" << kTop + plot_h + 16 << "\" text-anchor=\"middle\">0</text>\n";
  if (has_pos)
    for (int e = static_cast<int>(std::ceil(log_lo)); e <= static_cast<int>(std::floor(log_hi)); ++e)
      s << "<text x=\"" << x_of(std::pow(10.0, e)) << "\" y=\"" << kTop + plot_h + 16
        << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
  s << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
    << "\" text-anchor=\"middle\">uncertainty weight lambda</text>\n";
  s << "<text transform=\"translate(16," << kTop + plot_h / 2
    << ") rotate(-90)\" text-anchor=\"middle\">mean RMSE_selection</text>\n";

  for (std::size_t k = 0; k < names.size(); ++k) {
    auto pts = series[names[k]];
    std::stable_sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->lambda < b->lambda; });
    const char* color = kPalette[k % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto* p : pts) s << x_of(p->lambda) << ',' << y_of(p->rmse_selection.mean) << ' ';
    s << "\"/>\n";
    for (const auto* p : pts) {
      const double x = x_of(p->lambda);
      s << "<line x1=\"" << x << "\" y1=\"" << y_of(p->rmse_selection.mean - p->rmse_selection.stderr_)
        << "\" x2=\"" << x << "\" y2=\"" << y_of(p->rmse_selection.mean + p->rmse_selection.stderr_)
        << "\" stroke=\"" << color << "\"/>\n";
      s << "<circle cx=\"" << x << "\" cy=\"" << y_of(p->rmse_selection.mean) << "\" r=\"2.5\" fill=\"" << color
        << "\"/>\n";
    }
    const double ly = kTop + 14.0 * static_cast<double>(k);
    s << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly << "\" x2=\"" << kWidth - kRight + 28
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << kWidth - kRight + 32 << "\" y=\"" << ly + 4 << "\">" << names[k] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_report(const std::vector<EvalRecord>& records, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto rows = summarize(records);
  write_summary_csv(out_dir / "summary.csv", rows);
  std::ofstream svg(out_dir / "curves.svg", std::ios::binary | std::ios::trunc);
  if (!svg) throw Error("cannot write " + (out_dir / "curves.svg").string());
  svg << render_lambda_svg(rows);
}

}  // namespace ctsel::eval
