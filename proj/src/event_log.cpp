#include "procqrf/event_log.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "procqrf/error.hpp"
#include "procqrf/util.hpp"

namespace procqrf {

namespace {

constexpr std::string_view kCaseId = "case_id";
constexpr std::string_view kActivity = "activity";
constexpr std::string_view kStart = "t_start";
constexpr std::string_view kComplete = "t_complete";

bool is_reserved(std::string_view name) {
  return name == kCaseId || name == kActivity || name == kStart || name == kComplete;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool read_digits(std::string_view s, std::size_t pos, std::size_t count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

std::optional<Timestamp> parse_iso8601(std::string_view s) {
  int year, month, day, hour, minute, second;
  if (!read_digits(s, 0, 4, year) || s.size() < 19 || s[4] != '-' ||
      !read_digits(s, 5, 2, month) || s[7] != '-' || !read_digits(s, 8, 2, day) ||
      (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || !read_digits(s, 11, 2, hour) ||
      s[13] != ':' || !read_digits(s, 14, 2, minute) || s[16] != ':' ||
      !read_digits(s, 17, 2, second)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  double fraction = 0.0;
  if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
    ++pos;
    double scale = 0.1;
    const std::size_t begin = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      fraction += (s[pos] - '0') * scale;
      scale /= 10.0;
      ++pos;
    }
    if (pos == begin) return std::nullopt;
  }
  int offset_seconds = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' || s[pos] == 'z') {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const int sign = s[pos] == '+' ? 1 : -1;
      ++pos;
      int oh, om = 0;
      if (!read_digits(s, pos, 2, oh)) return std::nullopt;
      pos += 2;
      if (pos < s.size()) {
        if (s[pos] == ':') ++pos;
        if (!read_digits(s, pos, 2, om)) return std::nullopt;
        pos += 2;
      }
      if (oh > 23 || om > 59) return std::nullopt;
      offset_seconds = sign * (oh * 3600 + om * 60);
    } else {
      return std::nullopt;
    }
  }
  if (pos != s.size()) return std::nullopt;
  if (hour > 23 || minute > 59 || second > 60) return std::nullopt;

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  const double seconds = static_cast<double>(days) * 86400.0 + hour * 3600.0 + minute * 60.0 +
                         second - offset_seconds;
  return seconds + fraction;
}

std::string format_timestamp(Timestamp t) {
  if (std::nearbyint(t) == t && std::fabs(t) < 9.0e15) {
    return std::to_string(static_cast<long long>(t));
  }
  return format_double(t);
}

std::string format_value(const AttributeValue& v) {
  if (const double* d = std::get_if<double>(&v)) return format_double(*d);
  return std::get<std::string>(v);
}

}  // namespace

AttributeSchema::AttributeSchema(std::vector<AttributeSpec> attributes)
    : attributes_(std::move(attributes)) {
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    if (attributes_[i].name.empty()) {
      throw Error(ErrorCode::InvalidArgument, "attribute with empty name");
    }
    if (is_reserved(attributes_[i].name)) {
      throw Error(ErrorCode::InvalidArgument,
                  "attribute name '" + attributes_[i].name + "' is a reserved column");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (attributes_[j].name == attributes_[i].name) {
        throw Error(ErrorCode::InvalidArgument, "duplicate attribute '" + attributes_[i].name + "'");
      }
    }
  }
}

AttributeSchema AttributeSchema::from_json(std::string_view text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("attribute schema: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::FormatError, "attribute schema must be a JSON object");
  std::vector<AttributeSpec> specs;
  for (const auto& [name, entry] : doc.items()) {
    if (!entry.is_object() || !entry.contains("kind") || !entry["kind"].is_string()) {
      throw Error(ErrorCode::FormatError, "attribute '" + name + "' needs a string \"kind\"");
    }
    AttributeSpec spec;
    spec.name = name;
    const auto kind = entry["kind"].get<std::string>();
    if (kind == "numeric") {
      spec.kind = AttributeKind::Numeric;
    } else if (kind == "categorical") {
      spec.kind = AttributeKind::Categorical;
    } else {
      throw Error(ErrorCode::FormatError, "attribute '" + name + "' has unknown kind '" + kind + "'");
    }
    if (entry.contains("optional")) spec.optional = entry["optional"].get<bool>();
    specs.push_back(std::move(spec));
  }
  return AttributeSchema(std::move(specs));
}

std::string AttributeSchema::to_json() const {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& a : attributes_) {
    nlohmann::ordered_json entry;
    entry["kind"] = a.kind == AttributeKind::Numeric ? "numeric" : "categorical";
    if (a.optional) entry["optional"] = true;
    doc[a.name] = std::move(entry);
  }
  return doc.dump(2) + "\n";
}

const AttributeSpec* AttributeSchema::find(std::string_view name) const {
  for (const auto& a : attributes_) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::size_t EventLog::event_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : traces) n += t.size();
  return n;
}

Timestamp parse_timestamp(std::string_view text) {
  const std::string_view s = trim(text);
  if (s.empty()) throw Error(ErrorCode::BadTimestamp, "empty timestamp");
  const bool numeric = std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' ||
           c == 'e' || c == 'E';
  });
  // "2020-01-01..." also consists of digits and '-', so require no '-' after
  // the first character for the numeric path.
  if (numeric && s.find('-', 1) == std::string_view::npos) {
    if (auto v = parse_double(s); v && std::isfinite(*v)) return *v;
  }
  if (auto v = parse_iso8601(s)) return *v;
  throw Error(ErrorCode::BadTimestamp, "unparseable timestamp '" + std::string(s) + "'");
}

EventLog parse_event_log(std::istream& source, const AttributeSchema& schema) {
  csv::Reader reader(source);
  csv::Row header;
  if (!reader.next(header)) throw Error(ErrorCode::EmptyLog, "no header row");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  auto column = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    throw Error(ErrorCode::MissingColumn, "column '" + std::string(name) + "' not in header");
  };
  const std::size_t col_case = column(kCaseId);
  const std::size_t col_activity = column(kActivity);
  const std::size_t col_start = column(kStart);
  const std::size_t col_complete = column(kComplete);
  std::vector<std::size_t> attr_cols;
  for (const auto& a : schema.attributes()) attr_cols.push_back(column(a.name));

  EventLog log;
  log.schema = schema;
  std::unordered_map<std::string, std::size_t> trace_index;

  csv::Row row;
  while (reader.next(row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    const std::string where = "line " + std::to_string(reader.line());
    if (row.size() != header.size()) {
      throw Error(ErrorCode::MalformedRow, where + ": expected " + std::to_string(header.size()) +
                                               " fields, found " + std::to_string(row.size()));
    }
    Event e;
    e.case_id = std::string(trim(row[col_case]));
    e.activity = std::string(trim(row[col_activity]));
    if (e.case_id.empty()) throw Error(ErrorCode::MalformedRow, where + ": empty case_id");
    if (e.activity.empty()) throw Error(ErrorCode::MalformedRow, where + ": empty activity");
    try {
      e.t_start = parse_timestamp(row[col_start]);
      e.t_complete = parse_timestamp(row[col_complete]);
    } catch (const Error& err) {
      throw Error(ErrorCode::BadTimestamp, where + ": " + err.what());
    }
    if (e.t_complete < e.t_start) {
      throw Error(ErrorCode::BadTimestamp, where + ": t_complete precedes t_start");
    }
    for (std::size_t k = 0; k < attr_cols.size(); ++k) {
      const AttributeSpec& spec = schema.attributes()[k];
      const std::string_view cell = trim(row[attr_cols[k]]);
      if (cell.empty()) {
        if (!spec.optional) {
          throw Error(ErrorCode::MalformedRow, where + ": required attribute '" + spec.name + "' is empty");
        }
        continue;
      }
      if (spec.kind == AttributeKind::Numeric) {
        const auto v = parse_double(cell);
        if (!v || !std::isfinite(*v)) {
          throw Error(ErrorCode::MalformedRow,
                      where + ": attribute '" + spec.name + "' is not a finite number");
        }
        e.attributes.emplace(spec.name, *v);
      } else {
        e.attributes.emplace(spec.name, std::string(cell));
      }
    }
    auto [it, inserted] = trace_index.emplace(e.case_id, log.traces.size());
    if (inserted) log.traces.push_back(Trace{e.case_id, {}});
    log.traces[it->second].events.push_back(std::move(e));
  }
  if (log.traces.empty()) throw Error(ErrorCode::EmptyLog, "log contains no events");

  for (auto& trace : log.traces) {
    std::stable_sort(trace.events.begin(), trace.events.end(), [](const Event& a, const Event& b) {
      if (a.t_start != b.t_start) return a.t_start < b.t_start;
      return a.t_complete < b.t_complete;
    });
  }
  return log;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EventLog parse_event_log_file(const std::string& path, const AttributeSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return parse_event_log(in, schema);
}

void write_event_log(std::ostream& out, const EventLog& log) {
  csv::Row row{std::string(kCaseId), std::string(kActivity), std::string(kStart),
               std::string(kComplete)};
  for (const auto& a : log.schema.attributes()) row.push_back(a.name);
  csv::write_row(out, row);
  for (const auto& trace : log.traces) {
    for (const auto& e : trace.events) {
      row.clear();
      row.push_back(e.case_id);
      row.push_back(e.activity);
      row.push_back(format_timestamp(e.t_start));
      row.push_back(format_timestamp(e.t_complete));
      for (const auto& a : log.schema.attributes()) {
        auto it = e.attributes.find(a.name);
        row.push_back(it == e.attributes.end() ? std::string() : format_value(it->second));
      }
      csv::write_row(out, row);
    }
  }
}

Trace prefix_of(const Trace& trace, std::size_t i) {
  if (i == 0) throw Error(ErrorCode::InvalidArgument, "prefix length must be >= 1");
  const std::size_t n = std::min(i, trace.size());
  return Trace{trace.case_id, {trace.events.begin(), trace.events.begin() + static_cast<std::ptrdiff_t>(n)}};
}

Trace suffix_of(const Trace& trace, std::size_t i) {
  if (i == 0) throw Error(ErrorCode::InvalidArgument, "suffix length must be >= 1");
  // w = max(n - i + 1, 1), 1-based.
  const std::size_t n = trace.size();
  const std::size_t first = i >= n ? 0 : n - i;
  return Trace{trace.case_id, {trace.events.begin() + static_cast<std::ptrdiff_t>(first), trace.events.end()}};
}

std::vector<Trace> suffix_partial_traces(const Trace& trace) {
  std::vector<Trace> out;
  out.reserve(trace.size());
  for (std::size_t i = 1; i <= trace.size(); ++i) out.push_back(suffix_of(trace, i));
  return out;
}

double event_processing_time(const Event& event) noexcept {
  return (event.t_complete - event.t_start) / 60.0;
}

}  // namespace procqrf
