#pragma once

// Segmented series on the data scale and on the standard Laplace scale,
// plus the `segment_id,value` CSV format.

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "condex/error.hpp"

namespace condex {

/// Half-open index range [begin, end).
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const Segment&) const = default;
};

template <class Tag>
struct Series {
  std::vector<double> values;
  std::vector<Segment> segments;

  std::size_t size() const noexcept { return values.size(); }

  static Series single(std::vector<double> v) {
    Series s;
    s.segments.push_back({0, v.size()});
    s.values = std::move(v);
    return s;
  }

  void validate() const {
    if (values.empty()) throw InputError("series is empty");
    std::size_t pos = 0;
    for (const auto& seg : segments) {
      if (seg.begin != pos || seg.end <= seg.begin) throw InputError("segments must be ordered, contiguous and non-empty");
      pos = seg.end;
    }
    if (pos != values.size()) throw InputError("segments do not cover the series");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!std::isfinite(values[i])) throw InputError("non-finite value at index " + std::to_string(i));
  }
};

struct RawTag {};
struct LaplaceTag {};
using RawSeries = Series<RawTag>;
using LaplaceSeries = Series<LaplaceTag>;

/// Same values and segments under the other scale tag.
template <class To, class From>
Series<To> retag(Series<From> s) {
  return Series<To>{std::move(s.values), std::move(s.segments)};
}

/// A series as read from CSV, with its segment labels.
template <class Tag>
struct LabelledSeries {
  Series<Tag> series;
  std::vector<std::string> segment_ids;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, const std::string& where) {
  s = trim(s);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw InputError(where + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

template <class Tag = RawTag>
LabelledSeries<Tag> read_series_csv(std::istream& in, const std::string& name = "input") {
  LabelledSeries<Tag> out;
  std::string line;
  if (!std::getline(in, line)) throw InputError(name + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  {
    const auto h = detail::trim(line);
    const auto comma = h.find(',');
    if (comma == std::string_view::npos || detail::trim(h.substr(0, comma)) != "segment_id" ||
        detail::trim(h.substr(comma + 1)) != "value")
      throw InputError(name + ": header must be 'segment_id,value'");
  }
  std::unordered_set<std::string> closed;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const std::string where = name + " row " + std::to_string(row);
    const auto comma = t.find(',');
    if (comma == std::string_view::npos || t.find(',', comma + 1) != std::string_view::npos)
      throw InputError(where + ": expected two columns");
    std::string id(detail::trim(t.substr(0, comma)));
    if (id.empty()) throw InputError(where + ": empty segment_id");
    const double v = detail::parse_double(t.substr(comma + 1), where);
    if (!std::isfinite(v)) throw InputError(where + ": missing or non-finite value");
    auto& s = out.series;
    if (out.segment_ids.empty() || out.segment_ids.back() != id) {
      if (closed.count(id)) throw InputError(where + ": segment '" + id + "' is not contiguous");
      if (!out.segment_ids.empty()) closed.insert(out.segment_ids.back());
      out.segment_ids.push_back(id);
      s.segments.push_back({s.values.size(), s.values.size()});
    }
    s.values.push_back(v);
    s.segments.back().end = s.values.size();
  }
  if (out.series.values.empty()) throw InputError(name + ": no data rows");
  return out;
}

template <class Tag = RawTag>
LabelledSeries<Tag> read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_series_csv<Tag>(in, path);
}

template <class Tag>
void write_series_csv(std::ostream& out, const Series<Tag>& s, const std::vector<std::string>& ids = {}) {
  out << "segment_id,value\n";
  for (std::size_t g = 0; g < s.segments.size(); ++g) {
    const std::string id = g < ids.size() ? ids[g] : std::to_string(g);
    for (std::size_t i = s.segments[g].begin; i < s.segments[g].end; ++i)
      out << id << ',' << detail::format_double(s.values[i]) << '\n';
  }
}

}  // namespace condex
