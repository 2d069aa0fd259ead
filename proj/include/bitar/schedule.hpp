#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "bitar/error.hpp"

namespace bitar {

struct Scale {
  int h = 1;
  int w = 1;
  int area() const noexcept { return h * w; }
  bool operator==(const Scale&) const = default;
};

// Schedule ids of the built-in table are 0..14; everything else is custom.
inline constexpr std::uint16_t kCustomScheduleId = 0xFFFF;

struct ScaleSchedule {
  std::uint16_t id = kCustomScheduleId;
  std::string label;          // e.g. "1.000 (1:1)"
  double aspect_ratio = 1.0;  // h / w
  int height = 0;             // nominal resolution in pixels
  int width = 0;
  std::vector<Scale> scales;

  int size() const noexcept { return static_cast<int>(scales.size()); }
  const Scale& operator[](int k) const { return scales.at(static_cast<std::size_t>(k)); }
  const Scale& final_scale() const { return scales.back(); }

  // Pixels per final-scale cell.
  int stride() const { return scales.empty() || final_scale().h == 0 ? 0 : height / final_scale().h; }

  std::size_t token_count() const noexcept {
    std::size_t t = 0;
    for (const auto& s : scales) t += static_cast<std::size_t>(s.area());
    return t;
  }

  // First k scales. The nominal resolution follows the new final scale at the
  // same stride; the id is kept so a container can still name the row.
  ScaleSchedule truncated(int k) const {
    if (k < 1 || k > size()) throw RangeError("truncation length out of range");
    ScaleSchedule s = *this;
    const int st = stride();
    s.scales.resize(static_cast<std::size_t>(k));
    s.height = st * s.final_scale().h;
    s.width = st * s.final_scale().w;
    return s;
  }

  bool operator==(const ScaleSchedule&) const = default;
};

namespace detail {

struct ScheduleRow {
  const char* label;
  int num, den;  // aspect ratio num/den as h/w
  int height, width;
  Scale scales[13];
};

inline constexpr ScheduleRow kScheduleRows[] = {
    {"1.000 (1:1)", 1, 1, 1024, 1024,
     {{1, 1}, {2, 2}, {4, 4}, {6, 6}, {8, 8}, {12, 12}, {16, 16}, {20, 20}, {24, 24}, {32, 32}, {40, 40}, {48, 48}, {64, 64}}},
    {"0.800 (4:5)", 4, 5, 896, 1120,
     {{1, 1}, {2, 2}, {3, 3}, {4, 5}, {8, 10}, {12, 15}, {16, 20}, {20, 25}, {24, 30}, {28, 35}, {36, 45}, {44, 55}, {56, 70}}},
    {"1.250 (5:4)", 5, 4, 1120, 896,
     {{1, 1}, {2, 2}, {3, 3}, {5, 4}, {10, 8}, {15, 12}, {20, 16}, {25, 20}, {30, 24}, {35, 28}, {45, 36}, {55, 44}, {70, 56}}},
    {"0.750 (3:4)", 3, 4, 864, 1152,
     {{1, 1}, {2, 2}, {3, 4}, {6, 8}, {9, 12}, {12, 16}, {15, 20}, {18, 24}, {21, 28}, {27, 36}, {36, 48}, {45, 60}, {54, 72}}},
    {"1.333 (4:3)", 4, 3, 1152, 864,
     {{1, 1}, {2, 2}, {4, 3}, {8, 6}, {12, 9}, {16, 12}, {20, 15}, {24, 18}, {28, 21}, {36, 27}, {48, 36}, {60, 45}, {72, 54}}},
    {"0.666 (2:3)", 2, 3, 832, 1248,
     {{1, 1}, {2, 2}, {2, 3}, {4, 6}, {6, 9}, {10, 15}, {14, 21}, {18, 27}, {22, 33}, {26, 39}, {32, 48}, {42, 63}, {52, 78}}},
    {"1.500 (3:2)", 3, 2, 1248, 832,
     {{1, 1}, {2, 2}, {3, 2}, {6, 4}, {9, 6}, {15, 10}, {21, 14}, {27, 18}, {33, 22}, {39, 26}, {48, 32}, {63, 42}, {78, 52}}},
    {"0.571 (4:7)", 4, 7, 768, 1344,
     {{1, 1}, {2, 2}, {3, 3}, {4, 7}, {6, 11}, {8, 14}, {12, 21}, {16, 28}, {20, 35}, {24, 42}, {32, 56}, {40, 70}, {48, 84}}},
    {"1.750 (7:4)", 7, 4, 1344, 768,
     {{1, 1}, {2, 2}, {3, 3}, {7, 4}, {11, 6}, {14, 8}, {21, 12}, {28, 16}, {35, 20}, {42, 24}, {56, 32}, {70, 40}, {84, 48}}},
    {"0.500 (1:2)", 1, 2, 720, 1440,
     {{1, 1}, {2, 2}, {2, 4}, {3, 6}, {5, 10}, {8, 16}, {11, 22}, {15, 30}, {19, 38}, {23, 46}, {30, 60}, {37, 74}, {45, 90}}},
    {"2.000 (2:1)", 2, 1, 1440, 720,
     {{1, 1}, {2, 2}, {4, 2}, {6, 3}, {10, 5}, {16, 8}, {22, 11}, {30, 15}, {38, 19}, {46, 23}, {60, 30}, {74, 37}, {90, 45}}},
    {"0.400 (2:5)", 2, 5, 640, 1600,
     {{1, 1}, {2, 2}, {2, 5}, {4, 10}, {6, 15}, {8, 20}, {10, 25}, {12, 30}, {16, 40}, {20, 50}, {26, 65}, {32, 80}, {40, 100}}},
    {"2.500 (5:2)", 5, 2, 1600, 640,
     {{1, 1}, {2, 2}, {5, 2}, {10, 4}, {15, 6}, {20, 8}, {25, 10}, {30, 12}, {40, 16}, {50, 20}, {65, 26}, {80, 32}, {100, 40}}},
    {"0.333 (1:3)", 1, 3, 592, 1776,
     {{1, 1}, {2, 2}, {2, 6}, {3, 9}, {5, 15}, {7, 21}, {9, 27}, {12, 36}, {15, 45}, {18, 54}, {24, 72}, {30, 90}, {37, 111}}},
    {"3.000 (3:1)", 3, 1, 1776, 592,
     {{1, 1}, {2, 2}, {6, 2}, {9, 3}, {15, 5}, {21, 7}, {27, 9}, {36, 12}, {45, 15}, {54, 18}, {72, 24}, {90, 30}, {111, 37}}},
};

inline std::vector<ScaleSchedule> make_builtins() {
  std::vector<ScaleSchedule> out;
  std::uint16_t id = 0;
  for (const auto& row : kScheduleRows) {
    ScaleSchedule s;
    s.id = id++;
    s.label = row.label;
    s.aspect_ratio = static_cast<double>(row.num) / row.den;
    s.height = row.height;
    s.width = row.width;
    s.scales.assign(std::begin(row.scales), std::end(row.scales));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

inline const std::vector<ScaleSchedule>& builtin_schedules() {
  static const std::vector<ScaleSchedule> table = detail::make_builtins();
  return table;
}

// Ratios that print to three decimals (0.666, 0.333) are matched by value.
inline constexpr double kRatioMatchTolerance = 2e-3;

inline std::string format_ratio(double r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << r;
  return os.str();
}

inline std::string format_scale(const Scale& s) {
  return "(" + std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

// One line per schedule: "<label> <H>x<W> (h,w) (h,w) ...". The same layout is
// accepted by ScheduleRegistry::load.
inline std::string format_schedule(const ScaleSchedule& s) {
  std::ostringstream os;
  os << (s.label.empty() ? format_ratio(s.aspect_ratio) : s.label) << "  " << s.height << "x"
     << s.width << " ";
  for (const auto& sc : s.scales) os << " " << format_scale(sc);
  return os.str();
}

class ScheduleRegistry {
 public:
  ScheduleRegistry() = default;

  void add(ScaleSchedule s) {
    if (s.scales.empty()) throw ContractError("a schedule needs at least one scale");
    s.id = kCustomScheduleId;
    custom_.push_back(std::move(s));
  }

  const ScaleSchedule& find(double ratio) const {
    for (const auto& s : builtin_schedules())
      if (std::abs(s.aspect_ratio - ratio) <= kRatioMatchTolerance) return s;
    for (const auto& s : custom_)
      if (std::abs(s.aspect_ratio - ratio) <= kRatioMatchTolerance) return s;
    std::string available;
    for (const auto& s : builtin_schedules()) available += " " + format_ratio(s.aspect_ratio);
    for (const auto& s : custom_) available += " " + format_ratio(s.aspect_ratio);
    throw LookupError("no scale schedule for aspect ratio " + format_ratio(ratio) +
                      "; available:" + available);
  }

  const std::vector<ScaleSchedule>& custom() const noexcept { return custom_; }

  // Parses a schedule file: one record per line, '#' starts a comment.
  //   <ratio> [(<a>:<b>)] <H>x<W> (h,w) (h,w) ...
  void load(std::istream& in) {
    static const std::regex record(
        R"(^\s*([0-9]*\.?[0-9]+)\s*(\(\s*\d+\s*:\s*\d+\s*\))?\s+(\d+)\s*x\s*(\d+)\s+(.*)$)");
    static const std::regex pair(R"(\(\s*(\d+)\s*,\s*(\d+)\s*\))");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::smatch m;
      if (!std::regex_match(line, m, record))
        throw InvalidInput("schedule file line " + std::to_string(lineno) + ": malformed record");
      ScaleSchedule s;
      s.aspect_ratio = std::stod(m[1].str());
      s.label = m[2].matched ? m[1].str() + " " + m[2].str() : m[1].str();
      s.height = std::stoi(m[3].str());
      s.width = std::stoi(m[4].str());
      const std::string rest = m[5].str();
      for (auto it = std::sregex_iterator(rest.begin(), rest.end(), pair);
           it != std::sregex_iterator(); ++it)
        s.scales.push_back({std::stoi((*it)[1].str()), std::stoi((*it)[2].str())});
      if (s.scales.empty())
        throw InvalidInput("schedule file line " + std::to_string(lineno) + ": no scales");
      for (const auto& sc : s.scales)
        if (sc.h < 1 || sc.w < 1)
          throw InvalidInput("schedule file line " + std::to_string(lineno) + ": empty scale");
      add(std::move(s));
    }
  }

  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot open schedule file '" + path + "'");
    load(f);
  }

 private:
  std::vector<ScaleSchedule> custom_;
};

inline const ScaleSchedule& schedule_for(double ratio) {
  static const ScheduleRegistry builtins;
  return builtins.find(ratio);
}

inline const ScaleSchedule& builtin_schedule(std::uint16_t id) {
  if (id >= builtin_schedules().size())
    throw LookupError("unknown built-in schedule id " + std::to_string(id));
  return builtin_schedules()[id];
}

// The first K scales of the 1:1 row; the toy experiments run at K=7 (16x16).
inline ScaleSchedule square_schedule(int k) { return schedule_for(1.0).truncated(k); }

// A schedule outside the built-in table.
inline ScaleSchedule custom_schedule(std::vector<Scale> scales, int stride = 1) {
  if (scales.empty()) throw ContractError("a schedule needs at least one scale");
  ScaleSchedule s;
  s.scales = std::move(scales);
  s.aspect_ratio = static_cast<double>(s.final_scale().h) / s.final_scale().w;
  s.height = s.final_scale().h * stride;
  s.width = s.final_scale().w * stride;
  return s;
}

struct ScaleDeviation {
  Scale scale;
  double ratio_deviation = 0.0;  // |h/w - r| / r
  double area_deviation = 0.0;   // |hw - A_ref| / A_ref against the 1:1 row
  bool has_area_reference = false;
};

struct ScheduleTolerances {
  double final_ratio = 0.12;
  double final_area = 0.10;
  double sequence_length = 0.10;
};

struct ScheduleReport {
  std::vector<ScaleDeviation> per_scale;
  double sequence_length_deviation = 0.0;  // vs. the 1:1 row, same K
  int stride = 0;
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

inline ScheduleReport validate(const ScaleSchedule& s, const ScheduleTolerances& tol = {}) {
  ScheduleReport rep;
  if (s.scales.empty()) {
    rep.violations.push_back("schedule has no scales");
    return rep;
  }
  const auto& reference = schedule_for(1.0);
  rep.stride = s.stride();
  std::size_t ref_tokens = 0;
  for (int k = 0; k < s.size(); ++k) {
    ScaleDeviation dev;
    dev.scale = s[k];
    const double r = static_cast<double>(s[k].h) / s[k].w;
    dev.ratio_deviation = std::abs(r - s.aspect_ratio) / s.aspect_ratio;
    if (k < reference.size()) {
      const double ref = reference[k].area();
      dev.area_deviation = std::abs(s[k].area() - ref) / ref;
      dev.has_area_reference = true;
      ref_tokens += static_cast<std::size_t>(reference[k].area());
    }
    rep.per_scale.push_back(dev);
    if (k > 0 && (s[k].h < s[k - 1].h || s[k].w < s[k - 1].w))
      rep.violations.push_back("scale " + std::to_string(k + 1) + " shrinks");
  }
  const auto& last = rep.per_scale.back();
  if (last.ratio_deviation > tol.final_ratio)
    rep.violations.push_back("final-scale aspect ratio deviates by " +
                             std::to_string(last.ratio_deviation));
  if (last.has_area_reference && last.area_deviation > tol.final_area)
    rep.violations.push_back("final-scale area deviates by " + std::to_string(last.area_deviation));
  if (s.size() <= reference.size()) {
    rep.sequence_length_deviation =
        std::abs(static_cast<double>(s.token_count()) - static_cast<double>(ref_tokens)) /
        static_cast<double>(ref_tokens);
    if (rep.sequence_length_deviation > tol.sequence_length)
      rep.violations.push_back("sequence length deviates by " +
                               std::to_string(rep.sequence_length_deviation));
  }
  if (s.height != s.final_scale().h * rep.stride || s.width != s.final_scale().w * rep.stride)
    rep.violations.push_back("nominal resolution is not a stride multiple of the final scale");
  return rep;
}

}  // namespace bitar
