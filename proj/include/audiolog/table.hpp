// Copyright 2026 AudioLog Authors
// The timestamped scene/event table and its CSV/TSV/Markdown round-trip.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "audiolog/error.hpp"

namespace audiolog {

// One table row: event `event` active during [start_s, end_s) within scene
// `scene`. Times are whole seconds.
struct EventRow {
  int64_t start_s = 0;
  int64_t end_s = 0;
  std::string scene;
  std::string event;

  friend bool operator==(const EventRow& a, const EventRow& b) {
    return a.start_s == b.start_s && a.end_s == b.end_s && a.scene == b.scene &&
           a.event == b.event;
  }
};

struct EventTable {
  std::vector<EventRow> rows;  // kept sorted by (start_s, event, scene, end_s)
  double duration_s = 0.0;
};

enum class TableFormat { kCsv, kTsv, kMarkdown };

inline TableFormat table_format_from_name(const std::string& name) {
  if (name == "csv") return TableFormat::kCsv;
  if (name == "tsv") return TableFormat::kTsv;
  if (name == "markdown" || name == "md") return TableFormat::kMarkdown;
  throw ConfigError("unknown table format '" + name +
                    "' (expected csv, tsv or markdown)");
}

namespace table_detail {

inline bool row_less(const EventRow& a, const EventRow& b) {
  if (a.start_s != b.start_s) return a.start_s < b.start_s;
  if (a.event != b.event) return a.event < b.event;
  if (a.scene != b.scene) return a.scene < b.scene;
  return a.end_s < b.end_s;
}

inline void check_label(const std::string& label, char delim) {
  if (label.empty()) throw VocabularyMismatch("empty label in table");
  for (char c : label)
    if (c == delim || c == '\n' || c == '\r' || c == '|')
      throw VocabularyMismatch("label '" + label +
                               "' contains a reserved delimiter character");
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline int64_t parse_seconds(const std::string& field, int line_no) {
  const std::string t = trim(field);
  if (t.empty()) throw MalformedRow("line " + std::to_string(line_no) +
                                    ": empty time field");
  size_t pos = 0;
  long long v;
  try {
    v = std::stoll(t, &pos);
  } catch (const std::exception&) {
    throw MalformedRow("line " + std::to_string(line_no) +
                       ": not an integer: '" + t + "'");
  }
  if (pos != t.size() || v < 0)
    throw MalformedRow("line " + std::to_string(line_no) +
                       ": bad time value '" + t + "'");
  return v;
}

}  // namespace table_detail

inline void sort_rows(EventTable& table) {
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   table_detail::row_less);
}

inline void validate_table(const EventTable& table) {
  for (const auto& r : table.rows) {
    if (r.end_s <= r.start_s)
      throw MalformedRow("row with end " + std::to_string(r.end_s) +
                         " <= start " + std::to_string(r.start_s));
    if (r.start_s < 0 ||
        static_cast<double>(r.end_s) > table.duration_s + 1e-9)
      throw MalformedRow("row outside [0, duration]");
    if (r.scene.empty() || r.event.empty())
      throw VocabularyMismatch("row with empty label");
  }
}

// Header is exactly Start,End,Scene,Event; one line per row; trailing
// newline after every line. parse_table() inverts this byte-for-byte for all
// three formats.
inline std::string serialize_table(const EventTable& table,
                                   TableFormat format) {
  std::ostringstream os;
  if (format == TableFormat::kMarkdown) {
    os << "| Start | End | Scene | Event |\n";
    os << "| --- | --- | --- | --- |\n";
    for (const auto& r : table.rows) {
      table_detail::check_label(r.scene, '|');
      table_detail::check_label(r.event, '|');
      os << "| " << r.start_s << " | " << r.end_s << " | " << r.scene << " | "
         << r.event << " |\n";
    }
  } else {
    const char d = format == TableFormat::kCsv ? ',' : '\t';
    os << "Start" << d << "End" << d << "Scene" << d << "Event\n";
    for (const auto& r : table.rows) {
      table_detail::check_label(r.scene, d);
      table_detail::check_label(r.event, d);
      os << r.start_s << d << r.end_s << d << r.scene << d << r.event << "\n";
    }
  }
  return os.str();
}

// Parses any of the three formats. duration_s is set to the maximum end time
// (tables do not carry an explicit horizon).
inline EventTable parse_table(const std::string& text, TableFormat format) {
  using namespace table_detail;
  EventTable table;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;

    std::vector<std::string> fields;
    if (format == TableFormat::kMarkdown) {
      std::string body = trim(line);
      if (body.size() < 2 || body.front() != '|' || body.back() != '|')
        throw MalformedRow("line " + std::to_string(line_no) +
                           ": markdown row must be pipe-delimited");
      fields = split(body.substr(1, body.size() - 2), '|');
      for (auto& f : fields) f = trim(f);
      if (!fields.empty() && fields[0].find_first_not_of('-') ==
                                 std::string::npos &&
          !fields[0].empty())
        continue;  // separator line
    } else {
      fields = split(line, format == TableFormat::kCsv ? ',' : '\t');
      for (auto& f : fields) f = trim(f);
    }

    if (fields.size() != 4)
      throw MalformedRow("line " + std::to_string(line_no) + ": expected 4 " +
                         "fields, got " + std::to_string(fields.size()));
    if (!header_seen) {
      if (fields[0] != "Start" || fields[1] != "End" || fields[2] != "Scene" ||
          fields[3] != "Event")
        throw MalformedRow("line " + std::to_string(line_no) +
                           ": missing Start/End/Scene/Event header");
      header_seen = true;
      continue;
    }
    EventRow r;
    r.start_s = parse_seconds(fields[0], line_no);
    r.end_s = parse_seconds(fields[1], line_no);
    r.scene = fields[2];
    r.event = fields[3];
    if (r.end_s <= r.start_s)
      throw MalformedRow("line " + std::to_string(line_no) +
                         ": end must exceed start");
    if (r.scene.empty() || r.event.empty())
      throw MalformedRow("line " + std::to_string(line_no) + ": empty label");
    table.rows.push_back(std::move(r));
  }
  if (!header_seen) throw MalformedRow("table has no header line");
  for (const auto& r : table.rows)
    table.duration_s = std::max(table.duration_s, static_cast<double>(r.end_s));
  return table;
}

}  // namespace audiolog
