#pragma once

// Event-log domain: events, traces, logs, and the CSV/JSON formats they are
// exchanged in.

#include <cstddef>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace procqrf {

// Seconds since the Unix epoch.
using Timestamp = double;

enum class AttributeKind { Numeric, Categorical };

struct AttributeSpec {
  std::string name;
  AttributeKind kind = AttributeKind::Numeric;
  // Optional attributes may be left empty in the log.
  bool optional = false;

  bool operator==(const AttributeSpec&) const = default;
};

// Declared attribute columns, in column order.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<AttributeSpec> attributes);

  // JSON document: {"<column>": {"kind": "numeric"|"categorical", "optional": bool}, ...}
  // Document order is column order.
  static AttributeSchema from_json(std::string_view text);
  std::string to_json() const;

  const std::vector<AttributeSpec>& attributes() const noexcept { return attributes_; }
  const AttributeSpec* find(std::string_view name) const;
  std::size_t size() const noexcept { return attributes_.size(); }

  bool operator==(const AttributeSchema&) const = default;

 private:
  std::vector<AttributeSpec> attributes_;
};

using AttributeValue = std::variant<double, std::string>;

struct Event {
  std::string activity;
  std::string case_id;
  Timestamp t_start = 0;
  Timestamp t_complete = 0;
  // Case- and event-level attributes; absent keys are missing values.
  std::map<std::string, AttributeValue> attributes;

  bool operator==(const Event&) const = default;
};

struct Trace {
  std::string case_id;
  std::vector<Event> events;

  std::size_t size() const noexcept { return events.size(); }
  Timestamp first_start() const { return events.front().t_start; }

  bool operator==(const Trace&) const = default;
};

struct EventLog {
  // Traces in order of first appearance in the source.
  std::vector<Trace> traces;
  AttributeSchema schema;

  std::size_t event_count() const noexcept;
  bool operator==(const EventLog&) const = default;
};

// Reads the event-log CSV (header `case_id,activity,t_start,t_complete,<attr...>`).
// Timestamps are integer/decimal epoch seconds or ISO-8601. Rows are grouped
// into traces and sorted by (t_start, t_complete, file order). Columns not
// declared in the schema are ignored.
EventLog parse_event_log(std::istream& source, const AttributeSchema& schema);
EventLog parse_event_log_file(const std::string& path, const AttributeSchema& schema);

// Inverse of parse_event_log: timestamps are written as epoch seconds.
void write_event_log(std::ostream& out, const EventLog& log);

// Epoch seconds from integer/decimal seconds or ISO-8601
// (`YYYY-MM-DD[T ]hh:mm:ss[.fff][Z|+hh:mm|+hhmm]`, no offset means UTC).
Timestamp parse_timestamp(std::string_view text);

// First / last min(i, |trace|) events. i must be >= 1.
Trace prefix_of(const Trace& trace, std::size_t i);
Trace suffix_of(const Trace& trace, std::size_t i);

// All suffixes tl^1..tl^n of a trace, shortest first.
std::vector<Trace> suffix_partial_traces(const Trace& trace);

// Event processing time in minutes.
double event_processing_time(const Event& event) noexcept;

std::string read_file(const std::string& path);

}  // namespace procqrf
