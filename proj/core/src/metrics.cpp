#include "resnetplus/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "resnetplus/errors.hpp"

namespace rnp {

using nlohmann::json;

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < k; ++i) t += at(i, i);
  return t;
}

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                          std::size_t k) {
  if (y_true.size() != y_pred.size()) {
    throw DimensionError("confusion: " + std::to_string(y_true.size()) + " labels vs " +
                         std::to_string(y_pred.size()) + " predictions");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || static_cast<std::size_t>(y_true[i]) >= k || y_pred[i] < 0 ||
        static_cast<std::size_t>(y_pred[i]) >= k) {
      throw ArgumentError("confusion: label out of range at index " + std::to_string(i));
    }
    ++cm.at(static_cast<std::size_t>(y_true[i]), static_cast<std::size_t>(y_pred[i]));
  }
  return cm;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  ClassificationMetrics m;
  const std::size_t total = cm.total();
  m.accuracy = total == 0 ? 0.0 : static_cast<double>(cm.trace()) / static_cast<double>(total);
  for (std::size_t c = 0; c < cm.k; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < cm.k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const auto tp = static_cast<double>(cm.at(c, c));
    const double fp = static_cast<double>(col) - tp;
    const double fn = static_cast<double>(row) - tp;
    ClassMetrics cls;
    cls.support = row;
    cls.zero_support = row == 0;
    cls.zero_predictions = col == 0;
    cls.precision = col == 0 ? 0.0 : tp / (tp + fp);
    cls.recall = row == 0 ? 0.0 : tp / (tp + fn);
    const double denom = 2 * tp + fp + fn;
    cls.f1 = denom == 0 ? 0.0 : 2 * tp / denom;
    m.per_class.push_back(cls);
  }
  if (cm.k > 0) {
    for (const auto& c : m.per_class) {
      m.macro.precision += c.precision;
      m.macro.recall += c.recall;
      m.macro.f1 += c.f1;
    }
    const auto k = static_cast<double>(cm.k);
    m.macro.precision /= k;
    m.macro.recall /= k;
    m.macro.f1 /= k;
  }
  m.macro.support = total;
  // Single-label multiclass: pooled FP and FN both equal the off-diagonal mass.
  m.micro = {m.accuracy, m.accuracy, m.accuracy, total, total == 0, total == 0};
  return m;
}

RocCurve roc_curve(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DimensionError("roc_curve: size mismatch");
  const auto p = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t n = scores.size() - p;
  RocCurve curve;
  if (p == 0 || n == 0) {
    curve.defined = false;
    curve.points = {{0.0, 0.0}, {1.0, 1.0}};
    return curve;
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  curve.points.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (positive[order[i]] ? tp : fp) += 1;
      ++i;
    }
    curve.points.emplace_back(static_cast<double>(fp) / static_cast<double>(n),
                              static_cast<double>(tp) / static_cast<double>(p));
  }
  double auc = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto [x0, y0] = curve.points[i - 1];
    const auto [x1, y1] = curve.points[i];
    auc += (x1 - x0) * (y0 + y1) / 2.0;
  }
  curve.auc = auc;
  return curve;
}

namespace {

void check_scores(const Tensor<double>& scores, const std::vector<int>& y_true) {
  if (scores.rank() != 2 || scores.dim(0) != y_true.size()) {
    throw DimensionError("scores " + shape_str(scores.shape()) + " do not match " +
                         std::to_string(y_true.size()) + " labels");
  }
  for (int y : y_true) {
    if (y < 0 || static_cast<std::size_t>(y) >= scores.dim(1)) {
      throw ArgumentError("label " + std::to_string(y) + " out of range");
    }
  }
}

std::vector<double> column(const Tensor<double>& scores, std::size_t k) {
  std::vector<double> col(scores.dim(0));
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = scores.at(i, k);
  return col;
}

}  // namespace

RocResult roc_auc_ovr(const Tensor<double>& scores, const std::vector<int>& y_true) {
  check_scores(scores, y_true);
  RocResult r;
  double sum = 0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < scores.dim(1); ++k) {
    std::vector<bool> pos(y_true.size());
    for (std::size_t i = 0; i < y_true.size(); ++i) pos[i] = y_true[i] == static_cast<int>(k);
    r.curves.push_back(roc_curve(column(scores, k), pos));
    if (r.curves.back().defined) {
      sum += r.curves.back().auc;
      ++defined;
    }
  }
  r.macro_auc = defined == 0 ? 0.0 : sum / static_cast<double>(defined);
  return r;
}

double net_benefit(std::size_t tp, std::size_t fp, std::size_t n, double pt) {
  if (!(pt > 0.0 && pt < 1.0)) throw ArgumentError("net_benefit: pt must lie in (0,1)");
  if (n == 0) return 0.0;
  const auto nn = static_cast<double>(n);
  return static_cast<double>(tp) / nn - static_cast<double>(fp) / nn * pt / (1.0 - pt);
}

std::vector<double> default_pt_grid(double step) {
  if (!(step > 0.0 && step < 0.5)) throw ArgumentError("pt grid step must lie in (0, 0.5)");
  std::vector<double> grid;
  for (int i = 1;; ++i) {
    const double pt = i * step;
    if (pt >= 1.0 - 1e-12) break;
    grid.push_back(pt);
  }
  return grid;
}

std::vector<DcaCurve> dca_ovr(const Tensor<double>& scores, const std::vector<int>& y_true,
                              const std::vector<double>& pt_grid) {
  check_scores(scores, y_true);
  const std::size_t n = y_true.size();
  std::vector<DcaCurve> out;
  for (std::size_t k = 0; k < scores.dim(1); ++k) {
    DcaCurve c;
    c.thresholds = pt_grid;
    std::size_t pos = 0;
    for (int y : y_true) pos += y == static_cast<int>(k);
    for (double pt : pt_grid) {
      std::size_t tp = 0, fp = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (scores.at(i, k) >= pt) (y_true[i] == static_cast<int>(k) ? tp : fp) += 1;
      }
      c.net_benefit.push_back(net_benefit(tp, fp, n, pt));
      c.treat_all.push_back(net_benefit(pos, n - pos, n, pt));
      c.treat_none.push_back(0.0);
    }
    out.push_back(std::move(c));
  }
  return out;
}

LatencyStats latency_stats(const std::vector<double>& millis) {
  LatencyStats s;
  s.samples = millis.size();
  if (millis.empty()) return s;
  s.mean_ms = std::accumulate(millis.begin(), millis.end(), 0.0) / static_cast<double>(millis.size());
  if (millis.size() > 1) {
    double ss = 0;
    for (double v : millis) ss += (v - s.mean_ms) * (v - s.mean_ms);
    s.std_ms = std::sqrt(ss / static_cast<double>(millis.size() - 1));
  }
  return s;
}

MetricsReport make_report(const Tensor<double>& probs, const std::vector<int>& y_true,
                          std::vector<std::string> class_names) {
  check_scores(probs, y_true);
  const std::size_t k = probs.dim(1);
  if (class_names.size() != k) {
    throw DimensionError("make_report: " + std::to_string(class_names.size()) +
                         " class names for " + std::to_string(k) + " score columns");
  }
  std::vector<int> pred(y_true.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    }
    pred[i] = static_cast<int>(best);
  }
  MetricsReport r;
  r.class_names = std::move(class_names);
  r.confusion = confusion(y_true, pred, k);
  r.metrics = classification_metrics(r.confusion);
  auto roc = roc_auc_ovr(probs, y_true);
  r.roc = std::move(roc.curves);
  r.macro_auc = roc.macro_auc;
  r.dca = dca_ovr(probs, y_true);
  return r;
}

// --- serialization -------------------------------------------------------------------------

namespace {

json class_metrics_json(const ClassMetrics& c) {
  return json{{"precision", c.precision}, {"recall", c.recall},
              {"f1", c.f1},               {"support", c.support},
              {"zero_support", c.zero_support}, {"zero_predictions", c.zero_predictions}};
}

ClassMetrics class_metrics_from(const json& j) {
  ClassMetrics c;
  c.precision = j.at("precision").get<double>();
  c.recall = j.at("recall").get<double>();
  c.f1 = j.at("f1").get<double>();
  c.support = j.at("support").get<std::size_t>();
  c.zero_support = j.at("zero_support").get<bool>();
  c.zero_predictions = j.at("zero_predictions").get<bool>();
  return c;
}

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
  if (!out) throw FormatError("failed writing " + path);
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Plot {
  double x0 = 60, y0 = 20, w = 360, h = 300;  // plot area in px
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const {
    y = std::clamp(y, ymin, ymax);
    return y0 + h - (y - ymin) / (ymax - ymin) * h;
  }

  std::string frame(const std::string& title, const std::string& xlabel,
                    const std::string& ylabel) const {
    std::ostringstream s;
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"560\" height=\"380\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"560\" height=\"380\" fill=\"white\"/>\n"
      << "<text x=\"" << x0 + w / 2 << "\" y=\"14\" text-anchor=\"middle\" font-size=\"13\">" << title
      << "</text>\n"
      << "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n"
      << "<path d=\"M" << x0 << " " << y0 << " V" << y0 + h << " H" << x0 + w << "\" fill=\"none\"/>\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = xmin + (xmax - xmin) * i / 5.0;
      const double fy = ymin + (ymax - ymin) * i / 5.0;
      s << "<path d=\"M" << px(fx) << " " << y0 + h << " v4\"/>"
        << "<path d=\"M" << x0 << " " << py(fy) << " h-4\"/>\n";
    }
    s << "</g>\n<g font-size=\"10\">\n";
    for (int i = 0; i <= 5; ++i) {
      const double fx = xmin + (xmax - xmin) * i / 5.0;
      const double fy = ymin + (ymax - ymin) * i / 5.0;
      s << "<text x=\"" << px(fx) << "\" y=\"" << y0 + h + 16 << "\" text-anchor=\"middle\">"
        << fixed(fx, 1) << "</text>"
        << "<text x=\"" << x0 - 8 << "\" y=\"" << py(fy) + 3 << "\" text-anchor=\"end\">"
        << fixed(fy, 2) << "</text>\n";
    }
    s << "</g>\n"
      << "<text x=\"" << x0 + w / 2 << "\" y=\"" << y0 + h + 34 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << xlabel << "</text>\n"
      << "<text transform=\"translate(16," << y0 + h / 2 << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">"
      << ylabel << "</text>\n";
    return s.str();
  }

  std::string polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                       const std::string& cls, const std::string& extra = "") const {
    std::ostringstream s;
    s << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\"" << extra << " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s << (i ? " " : "") << fixed(px(pts[i].first), 2) << "," << fixed(py(pts[i].second), 2);
    }
    s << "\"/>\n";
    return s.str();
  }

  std::string legend(std::size_t i, const std::string& color, const std::string& label) const {
    std::ostringstream s;
    const double ly = y0 + 12 + 16 * static_cast<double>(i);
    s << "<rect x=\"" << x0 + w + 12 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\""
      << color << "\"/><text x=\"" << x0 + w + 26 << "\" y=\"" << ly + 1 << "\" font-size=\"11\">"
      << label << "</text>\n";
    return s.str();
  }
};

std::string xml_escape(const std::string& in) {
  std::string out;
  for (char c : in) {
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

json to_json(const MetricsReport& r) {
  json roc = json::array();
  for (const auto& c : r.roc) {
    json pts = json::array();
    for (const auto& [x, y] : c.points) pts.push_back({x, y});
    roc.push_back({{"auc", c.auc}, {"defined", c.defined}, {"points", pts}});
  }
  json dca = json::array();
  for (const auto& c : r.dca) {
    dca.push_back({{"thresholds", c.thresholds},
                   {"net_benefit", c.net_benefit},
                   {"treat_all", c.treat_all},
                   {"treat_none", c.treat_none}});
  }
  json per_class = json::array();
  for (const auto& c : r.metrics.per_class) per_class.push_back(class_metrics_json(c));
  return json{{"class_names", r.class_names},
              {"weights", r.weights},
              {"confusion", {{"k", r.confusion.k}, {"counts", r.confusion.counts}}},
              {"accuracy", r.metrics.accuracy},
              {"per_class", per_class},
              {"macro", class_metrics_json(r.metrics.macro)},
              {"micro", class_metrics_json(r.metrics.micro)},
              {"roc", roc},
              {"macro_auc", r.macro_auc},
              {"dca", dca},
              {"latency", {{"mean_ms", r.latency.mean_ms},
                           {"std_ms", r.latency.std_ms},
                           {"samples", r.latency.samples}}}};
}

MetricsReport metrics_report_from_json(const json& j) {
  MetricsReport r;
  try {
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.weights = j.at("weights").get<std::string>();
    r.confusion.k = j.at("confusion").at("k").get<std::size_t>();
    r.confusion.counts = j.at("confusion").at("counts").get<std::vector<std::size_t>>();
    r.metrics.accuracy = j.at("accuracy").get<double>();
    for (const auto& c : j.at("per_class")) r.metrics.per_class.push_back(class_metrics_from(c));
    r.metrics.macro = class_metrics_from(j.at("macro"));
    r.metrics.micro = class_metrics_from(j.at("micro"));
    for (const auto& c : j.at("roc")) {
      RocCurve curve;
      curve.auc = c.at("auc").get<double>();
      curve.defined = c.at("defined").get<bool>();
      for (const auto& p : c.at("points")) curve.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      r.roc.push_back(std::move(curve));
    }
    r.macro_auc = j.at("macro_auc").get<double>();
    for (const auto& c : j.at("dca")) {
      DcaCurve d;
      d.thresholds = c.at("thresholds").get<std::vector<double>>();
      d.net_benefit = c.at("net_benefit").get<std::vector<double>>();
      d.treat_all = c.at("treat_all").get<std::vector<double>>();
      d.treat_none = c.at("treat_none").get<std::vector<double>>();
      r.dca.push_back(std::move(d));
    }
    r.latency.mean_ms = j.at("latency").at("mean_ms").get<double>();
    r.latency.std_ms = j.at("latency").at("std_ms").get<double>();
    r.latency.samples = j.at("latency").at("samples").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

std::string summary_line(const MetricsReport& r) {
  std::ostringstream s;
  s << "ACC " << fixed(100 * r.metrics.accuracy, 2) << "  PRE " << fixed(100 * r.metrics.macro.precision, 2)
    << "  REC " << fixed(100 * r.metrics.macro.recall, 2) << "  F1 " << fixed(100 * r.metrics.macro.f1, 2)
    << "  AUC " << fixed(100 * r.macro_auc, 2);
  return s.str();
}

std::string roc_svg(const MetricsReport& r) {
  Plot p;
  std::ostringstream s;
  s << p.frame("ROC (one-vs-all)", "False positive rate", "True positive rate");
  s << "<line class=\"reference\" x1=\"" << p.px(0) << "\" y1=\"" << p.py(0) << "\" x2=\"" << p.px(1)
    << "\" y2=\"" << p.py(1) << "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t k = 0; k < r.roc.size(); ++k) {
    const std::string color = kPalette[k % std::size(kPalette)];
    s << p.polyline(r.roc[k].points, color, "roc");
    const std::string name = k < r.class_names.size() ? r.class_names[k] : std::to_string(k);
    s << p.legend(k, color, xml_escape(name) + " (AUC " + fixed(r.roc[k].auc, 3) + ")");
  }
  s << "</svg>\n";
  return s.str();
}

std::string dca_svg(const MetricsReport& r) {
  Plot p;
  p.ymin = -0.1;
  p.ymax = 0.1;
  for (const auto& c : r.dca) {
    for (double v : c.net_benefit) p.ymax = std::max(p.ymax, v);
    for (double v : c.treat_all) p.ymax = std::max(p.ymax, v);
  }
  std::ostringstream s;
  s << p.frame("Decision curves (one-vs-all)", "Threshold probability", "Net benefit");
  s << "<line class=\"treat-none\" x1=\"" << p.px(0) << "\" y1=\"" << p.py(0) << "\" x2=\"" << p.px(1)
    << "\" y2=\"" << p.py(0) << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  for (std::size_t k = 0; k < r.dca.size(); ++k) {
    const std::string color = kPalette[k % std::size(kPalette)];
    std::vector<std::pair<double, double>> model, all;
    for (std::size_t i = 0; i < r.dca[k].thresholds.size(); ++i) {
      model.emplace_back(r.dca[k].thresholds[i], r.dca[k].net_benefit[i]);
      all.emplace_back(r.dca[k].thresholds[i], r.dca[k].treat_all[i]);
    }
    s << p.polyline(model, color, "net-benefit");
    s << p.polyline(all, color, "treat-all", " stroke-dasharray=\"3 3\" opacity=\"0.6\"");
    const std::string name = k < r.class_names.size() ? r.class_names[k] : std::to_string(k);
    s << p.legend(k, color, xml_escape(name));
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::string> export_report(const MetricsReport& r, const std::string& dir,
                                       unsigned formats, const std::string& stem) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw FormatError("cannot create report directory " + dir);
  std::vector<std::string> written;
  auto path = [&](const std::string& suffix) { return (fs::path(dir) / (stem + suffix)).string(); };
  auto name = [&](std::size_t k) {
    return k < r.class_names.size() ? r.class_names[k] : std::to_string(k);
  };

  if (formats & kExportJson) {
    write_text(path(".json"), to_json(r).dump(2) + "\n");
    written.push_back(path(".json"));
  }
  if (formats & kExportCsv) {
    std::ostringstream m;
    m << "class,precision,recall,f1,auc\n";
    for (std::size_t k = 0; k < r.metrics.per_class.size(); ++k) {
      const auto& c = r.metrics.per_class[k];
      m << name(k) << "," << num(c.precision) << "," << num(c.recall) << "," << num(c.f1) << ","
        << (k < r.roc.size() ? num(r.roc[k].auc) : "") << "\n";
    }
    m << "macro," << num(r.metrics.macro.precision) << "," << num(r.metrics.macro.recall) << ","
      << num(r.metrics.macro.f1) << "," << num(r.macro_auc) << "\n";
    m << "accuracy," << num(r.metrics.accuracy) << "\n";
    write_text(path(".csv"), m.str());

    std::ostringstream roc;
    roc << "class,fpr,tpr\n";
    for (std::size_t k = 0; k < r.roc.size(); ++k) {
      for (const auto& [x, y] : r.roc[k].points) roc << name(k) << "," << num(x) << "," << num(y) << "\n";
    }
    write_text(path("_roc.csv"), roc.str());

    std::ostringstream dca;
    dca << "class,pt,net_benefit,treat_all,treat_none\n";
    for (std::size_t k = 0; k < r.dca.size(); ++k) {
      const auto& c = r.dca[k];
      for (std::size_t i = 0; i < c.thresholds.size(); ++i) {
        dca << name(k) << "," << num(c.thresholds[i]) << "," << num(c.net_benefit[i]) << ","
            << num(c.treat_all[i]) << "," << num(c.treat_none[i]) << "\n";
      }
    }
    write_text(path("_dca.csv"), dca.str());
    written.insert(written.end(), {path(".csv"), path("_roc.csv"), path("_dca.csv")});
  }
  if (formats & kExportSvg) {
    write_text(path("_roc.svg"), roc_svg(r));
    write_text(path("_dca.svg"), dca_svg(r));
    written.insert(written.end(), {path("_roc.svg"), path("_dca.svg")});
  }
  return written;
}

}  // namespace rnp
