#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "labplan/schedule.hpp"

namespace labplan::schedule {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

// FNV-1a, so colors do not depend on std::hash.
std::uint32_t stable_hash(const std::string& s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

std::string agent_color(const std::string& agent) {
  const int hue = static_cast<int>(stable_hash(agent) % 360);
  return "hsl(" + std::to_string(hue) + ",55%,62%)";
}

std::int64_t time_unit(const Schedule& s) {
  std::int64_t g = 0;
  for (const auto& iv : s.intervals) g = std::gcd(g, std::gcd(iv.start, iv.end));
  if (g <= 0) g = 1;
  const std::int64_t max_cols = 120;
  if (s.makespan / g > max_cols) {
    const std::int64_t want = (s.makespan + max_cols - 1) / max_cols;
    g = ((want + g - 1) / g) * g;
  }
  return g;
}

std::vector<const Interval*> sorted_intervals(const Schedule& s) {
  std::vector<const Interval*> out;
  for (const auto& iv : s.intervals) out.push_back(&iv);
  std::stable_sort(out.begin(), out.end(), [](const Interval* a, const Interval* b) {
    return std::tie(a->start, a->end, a->agent) < std::tie(b->start, b->end, b->agent);
  });
  return out;
}

std::string render_ascii(const Schedule& s) {
  std::ostringstream out;
  const std::int64_t unit = time_unit(s);
  out << "Gantt chart: makespan " << s.makespan << " s, one column = " << unit << " s\n";
  if (s.intervals.empty()) return out.str();
  std::size_t width = 5;
  for (const auto& a : s.agents) width = std::max(width, a.size());
  const std::int64_t cols = (s.makespan + unit - 1) / unit;
  for (const auto& agent : s.agents) {
    std::string row(static_cast<std::size_t>(cols), '.');
    for (const auto& iv : s.intervals) {
      if (iv.agent != agent) continue;
      for (std::int64_t c = 0; c < cols; ++c) {
        const std::int64_t mid2 = 2 * c * unit + unit;  // twice the cell midpoint
        if (2 * iv.start <= mid2 && mid2 < 2 * iv.end) row[static_cast<std::size_t>(c)] = iv.joint ? '=' : '#';
      }
    }
    out << agent << std::string(width - agent.size(), ' ') << " |" << row << "|\n";
  }
  out << "\n";
  for (const Interval* iv : sorted_intervals(s)) {
    out << "  " << iv->start << "-" << iv->end << "  " << iv->agent << "  " << iv->action << (iv->joint ? "  [joint]" : "")
        << "\n";
  }
  return out.str();
}

std::string render_svg(const Schedule& s) {
  const double label_w = 170;
  const double chart_w = 900;
  const double row_h = 34;
  const double top = 40;
  const double span = static_cast<double>(std::max<std::int64_t>(s.makespan, 1));
  const double scale = chart_w / span;
  const double height = top + row_h * static_cast<double>(s.agents.size()) + 40;
  const double width = label_w + chart_w + 30;

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(height)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
       "patternTransform=\"rotate(45)\"><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#333\" "
       "stroke-width=\"1.5\"/></pattern></defs>\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fmt(label_w) << "\" y=\"20\" font-size=\"13\">makespan " << s.makespan << " s</text>\n";

  // Ticks every 60 s when that stays readable, otherwise coarser.
  std::int64_t tick = 60;
  while (s.makespan / tick > 20) tick *= 2;
  const double axis_y = top + row_h * static_cast<double>(s.agents.size());
  o << "<line x1=\"" << fmt(label_w) << "\" y1=\"" << fmt(axis_y) << "\" x2=\"" << fmt(label_w + chart_w) << "\" y2=\""
    << fmt(axis_y) << "\" stroke=\"black\"/>\n";
  for (std::int64_t t = 0; t <= s.makespan; t += tick) {
    const double x = label_w + static_cast<double>(t) * scale;
    o << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(top) << "\" x2=\"" << fmt(x) << "\" y2=\"" << fmt(axis_y + 4)
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(axis_y + 16) << "\" text-anchor=\"middle\">" << t << "</text>\n";
  }
  o << "<text x=\"" << fmt(label_w + chart_w / 2) << "\" y=\"" << fmt(axis_y + 32)
    << "\" text-anchor=\"middle\">time (s)</text>\n";

  for (std::size_t r = 0; r < s.agents.size(); ++r) {
    const std::string& agent = s.agents[r];
    const double y = top + row_h * static_cast<double>(r);
    o << "<text x=\"" << fmt(label_w - 8) << "\" y=\"" << fmt(y + row_h / 2 + 4) << "\" text-anchor=\"end\">"
      << escape_xml(agent) << "</text>\n";
    for (const auto& iv : s.intervals) {
      if (iv.agent != agent) continue;
      const double x = label_w + static_cast<double>(iv.start) * scale;
      const double w = static_cast<double>(iv.end - iv.start) * scale;
      o << "<g><title>" << escape_xml(iv.action) << " [" << iv.start << ", " << iv.end << "]</title>";
      o << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y + 4) << "\" width=\"" << fmt(w) << "\" height=\""
        << fmt(row_h - 8) << "\" fill=\"" << agent_color(agent) << "\" stroke=\"black\"/>";
      if (iv.joint) {
        o << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y + 4) << "\" width=\"" << fmt(w) << "\" height=\""
          << fmt(row_h - 8) << "\" fill=\"url(#hatch)\" stroke=\"black\"/>";
      }
      o << "</g>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace

std::string render_gantt(const Schedule& sched, const std::string& format) {
  if (format == "ascii") return render_ascii(sched);
  if (format == "svg") return render_svg(sched);
  if (format == "json") return schedule_to_json(sched);
  throw ScheduleError("unknown gantt format '" + format + "' (expected svg, ascii or json)");
}

}  // namespace labplan::schedule
