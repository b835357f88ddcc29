#include "toad/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace toad {
namespace {

// Frame order by descending score, ties broken by ascending frame index.
std::vector<std::size_t> rank_order(std::span<const float> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

std::size_t count_positives(std::span<const float> scores,
                            std::span<const std::uint8_t> positives) {
  if (scores.size() != positives.size()) {
    throw DimensionError("AP: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(positives.size()) + " labels");
  }
  for (float s : scores) {
    if (!std::isfinite(s)) throw NumericError("AP: non-finite score");
  }
  std::size_t n = 0;
  for (auto p : positives) n += p != 0;
  if (n == 0) throw DegenerateInputError("AP undefined: no positive frames");
  return n;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ScoreTable::validate() const {
  if (scores.rank() != 2 || scores.dim(0) != labels.size()) {
    throw DimensionError("score table " + shape_string(scores.shape()) + " does not align with " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw DataError("score table has no frames");
  check_finite(scores, "score table");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes()) {
      throw LabelError("score table: label " + std::to_string(labels[i]) + " at frame " +
                       std::to_string(i) + " out of range");
    }
  }
}

ScoreTable ScoreTable::concat(std::span<const ScoreTable> parts) {
  if (parts.empty()) throw DataError("no score tables to concatenate");
  const std::size_t c = parts.front().classes();
  std::size_t frames = 0;
  for (const auto& p : parts) {
    if (p.classes() != c) throw DimensionError("score tables disagree on class count");
    frames += p.frames();
  }
  ScoreTable out;
  out.scores = Tensor<float>({frames, c});
  float* dst = out.scores.raw();
  for (const auto& p : parts) {
    dst = std::copy(p.scores.data().begin(), p.scores.data().end(), dst);
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

double average_precision(std::span<const float> scores, std::span<const std::uint8_t> positives) {
  const std::size_t total = count_positives(scores, positives);
  const auto order = rank_order(scores);
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positives[order[r]]) continue;
    ++tp;
    sum += static_cast<double>(tp) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(total);
}

double calibrated_precision(double tp, double fp, double w) {
  if (tp + fp <= 0.0) throw DegenerateInputError("calibrated precision undefined: TP + FP == 0");
  if (!(w > 0.0)) throw DegenerateInputError("calibrated precision needs w > 0");
  return w * tp / (w * tp + fp);
}

double negative_positive_ratio(std::span<const std::uint8_t> positives) {
  std::size_t pos = 0;
  for (auto p : positives) pos += p != 0;
  if (pos == 0) throw DegenerateInputError("negative/positive ratio undefined: no positives");
  return static_cast<double>(positives.size() - pos) / static_cast<double>(pos);
}

double calibrated_ap(std::span<const float> scores, std::span<const std::uint8_t> positives,
                     double w) {
  const std::size_t total = count_positives(scores, positives);
  if (total == positives.size()) return 1.0;
  const auto order = rank_order(scores);
  double sum = 0.0;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positives[order[r]]) continue;
    ++tp;
    const std::size_t fp = r + 1 - tp;
    sum += calibrated_precision(static_cast<double>(tp), static_cast<double>(fp), w);
  }
  return sum / static_cast<double>(total);
}

MapReport map_report(const ScoreTable& table, bool calibrated,
                     std::span<const std::string> class_names) {
  table.validate();
  MapReport report;
  report.calibrated = calibrated;
  const std::size_t f = table.frames();
  std::vector<float> column(f);
  std::vector<std::uint8_t> positives(f);
  double sum = 0.0;
  for (std::size_t c = 1; c < table.classes(); ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < f; ++i) {
      column[i] = table.scores.at(i, c);
      positives[i] = table.labels[i] == static_cast<int>(c);
      pos += positives[i];
    }
    if (pos == 0) {
      report.skipped.push_back(c);
      continue;
    }
    ClassReport cr;
    cr.class_index = c;
    cr.name = c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
    cr.positives = pos;
    cr.w = negative_positive_ratio(positives);
    cr.ap = calibrated ? calibrated_ap(column, positives, cr.w) : average_precision(column, positives);
    sum += cr.ap;
    report.classes.push_back(std::move(cr));
  }
  if (!report.classes.empty()) report.mean = sum / static_cast<double>(report.classes.size());
  return report;
}

std::string MapReport::to_text() const {
  std::ostringstream os;
  const char* metric = calibrated ? "cAP" : "AP";
  char line[256];
  for (const auto& c : classes) {
    std::snprintf(line, sizeof line, "%-24s %s=%.6f positives=%zu w=%.6f\n", c.name.c_str(),
                  metric, c.ap, c.positives, c.w);
    os << line;
  }
  std::snprintf(line, sizeof line, "%s=%.6f over %zu classes\n", calibrated ? "mcAP" : "mAP", mean,
                classes.size());
  os << line;
  if (!skipped.empty()) {
    os << "skipped (no positive frames):";
    for (auto c : skipped) os << ' ' << c;
    os << '\n';
  }
  return os.str();
}

std::string MapReport::to_summary() const {
  std::ostringstream os;
  os << "metric=" << (calibrated ? "mcAP" : "mAP") << '\n';
  os << "mean=" << format_double(mean) << '\n';
  os << "classes=" << classes.size() << '\n';
  for (const auto& c : classes) {
    os << "ap." << c.class_index << '=' << format_double(c.ap) << '\n';
    os << "positives." << c.class_index << '=' << c.positives << '\n';
    os << "w." << c.class_index << '=' << format_double(c.w) << '\n';
  }
  os << "skipped=";
  for (std::size_t i = 0; i < skipped.size(); ++i) os << (i ? "," : "") << skipped[i];
  os << '\n';
  return os.str();
}

std::string MapReport::to_csv() const {
  std::ostringstream os;
  os << "class_index,name," << (calibrated ? "cap" : "ap") << ",positives,w\n";
  for (const auto& c : classes) {
    os << c.class_index << ',' << c.name << ',' << format_double(c.ap) << ',' << c.positives
       << ',' << format_double(c.w) << '\n';
  }
  return os.str();
}

std::map<std::string, std::string> parse_summary(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("summary line without '=': " + line);
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

double frame_accuracy(const ScoreTable& table) {
  table.validate();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < table.frames(); ++i) {
    const auto row = table.scores.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == table.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(table.frames());
}

}  // namespace toad
