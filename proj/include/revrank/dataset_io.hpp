#ifndef REVRANK_DATASET_IO_HPP_
#define REVRANK_DATASET_IO_HPP_

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "revrank/dataset.hpp"
#include "revrank/errors.hpp"

namespace revrank {

enum class FileFormat { kCsv, kJsonl };

inline FileFormat format_from_name(const std::string& name) {
  if (name == "csv") return FileFormat::kCsv;
  if (name == "jsonl") return FileFormat::kJsonl;
  throw ValidationError("unknown dataset format '" + name + "' (expected csv or jsonl)");
}

/*! \brief Pick a format from the file extension; csv unless the name ends in .jsonl. */
inline FileFormat infer_format(const std::string& path) {
  const std::string suffix = ".jsonl";
  if (path.size() >= suffix.size() &&
      path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return FileFormat::kJsonl;
  }
  return FileFormat::kCsv;
}

namespace detail {

/*! \brief Shortest decimal string that parses back to exactly the same double. */
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& where, const char* field) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(where + ": bad number for " + field + " ('" + std::string(text) + "')");
  }
  return v;
}

inline int parse_click(std::string_view text, const std::string& where) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw ParseError(where + ": bad value for click ('" + std::string(text) + "'), expected 0 or 1");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return std::move(buf).str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw IoError("write failed on '" + path + "'");
}

/*! \brief Split into lines on LF; a trailing CR per line is dropped. */
inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  // A final newline leaves one empty trailing entry; it is not a data line.
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t end = line.find(',', start);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

inline Dataset load_csv(const std::string& path, const std::string& content) {
  const auto lines = split_lines(content);
  if (lines.empty()) throw ParseError(path + ": file is empty");

  // Header: ectr, bid and click are required; impression_id is optional and a
  // y column is tolerated but ignored (the label is always recomputed).
  const auto header = split_csv(lines[0]);
  int col_id = -1, col_ectr = -1, col_bid = -1, col_click = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string_view name = header[c];
    int* slot = nullptr;
    if (name == "impression_id") slot = &col_id;
    else if (name == "ectr") slot = &col_ectr;
    else if (name == "bid") slot = &col_bid;
    else if (name == "click") slot = &col_click;
    else if (name == "y") continue;
    else throw ParseError(path + ":1: unknown column '" + std::string(name) + "'");
    if (*slot >= 0) throw ParseError(path + ":1: duplicate column '" + std::string(name) + "'");
    *slot = static_cast<int>(c);
  }
  if (col_ectr < 0 || col_bid < 0 || col_click < 0) {
    throw ParseError(path + ":1: header must name ectr, bid and click columns");
  }

  Dataset ds;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = path + ":" + std::to_string(i + 1);
    if (lines[i].empty()) throw ParseError(where + ": empty row");
    const auto fields = split_csv(lines[i]);
    if (fields.size() != header.size()) {
      throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    }
    std::string id = col_id >= 0 ? std::string(fields[col_id]) : std::string();
    const double ectr = parse_double(fields[col_ectr], where, "ectr");
    const double bid = parse_double(fields[col_bid], where, "bid");
    const int click = parse_click(fields[col_click], where);
    ds.add(make_record(std::move(id), ectr, bid, click, where));
  }
  if (ds.empty()) throw ParseError(path + ": dataset has no records");
  return ds;
}

inline Dataset load_jsonl(const std::string& path, const std::string& content) {
  const auto lines = split_lines(content);
  if (lines.empty()) throw ParseError(path + ": file is empty");

  Dataset ds;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = path + ":" + std::to_string(i + 1);
    if (lines[i].empty()) throw ParseError(where + ": empty row");
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw ParseError(where + ": expected a JSON object");

    std::string id;
    if (obj.contains("impression_id")) {
      const auto& v = obj["impression_id"];
      if (v.is_string()) id = v.get<std::string>();
      else if (v.is_number()) id = v.dump();
      else throw ParseError(where + ": impression_id must be a string or number");
    }
    auto need_number = [&](const char* key) -> double {
      if (!obj.contains(key) || !obj[key].is_number()) {
        throw ParseError(where + ": missing or non-numeric field '" + key + "'");
      }
      return obj[key].get<double>();
    };
    const double ectr = need_number("ectr");
    const double bid = need_number("bid");
    if (!obj.contains("click") || !obj["click"].is_number_integer()) {
      throw ParseError(where + ": missing or non-integer field 'click'");
    }
    const std::int64_t click64 = obj["click"].get<std::int64_t>();
    if (click64 != 0 && click64 != 1) {
      throw ParseError(where + ": bad value for click (" + std::to_string(click64) + ")");
    }
    ds.add(make_record(std::move(id), ectr, bid, static_cast<int>(click64), where));
  }
  return ds;
}

inline void append_json_string(std::string& out, const std::string& s) {
  out += nlohmann::json(s).dump();
}

}  // namespace detail

inline Dataset load_dataset(const std::string& path, FileFormat format) {
  const std::string content = detail::read_file(path);
  return format == FileFormat::kCsv ? detail::load_csv(path, content)
                                    : detail::load_jsonl(path, content);
}

inline Dataset load_dataset(const std::string& path) {
  return load_dataset(path, infer_format(path));
}

inline void save_dataset(const Dataset& ds, const std::string& path, FileFormat format) {
  if (ds.empty()) throw ValidationError("dataset has no records");
  std::string out;
  out.reserve(ds.size() * 48 + 64);
  if (format == FileFormat::kCsv) {
    out += "impression_id,ectr,bid,click\n";
    for (const auto& rec : ds.pooled()) {
      out += rec.impression_id;
      out += ',';
      out += detail::format_double(rec.ectr);
      out += ',';
      out += detail::format_double(rec.bid);
      out += ',';
      out += rec.click ? '1' : '0';
      out += '\n';
    }
  } else {
    for (const auto& rec : ds.pooled()) {
      out += "{\"impression_id\":";
      detail::append_json_string(out, rec.impression_id);
      out += ",\"ectr\":";
      out += detail::format_double(rec.ectr);
      out += ",\"bid\":";
      out += detail::format_double(rec.bid);
      out += ",\"click\":";
      out += rec.click ? '1' : '0';
      out += "}\n";
    }
  }
  detail::write_file(path, out);
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  save_dataset(ds, path, infer_format(path));
}

}  // namespace revrank

#endif  // REVRANK_DATASET_IO_HPP_
