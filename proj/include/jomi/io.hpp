#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "jomi/intervals.hpp"
#include "jomi/unit.hpp"

namespace jomi {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Number formatting. Every float is emitted with 17 significant digits so
// that documents round-trip bit-exactly and identical runs produce identical
// bytes.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(std::string_view s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  double out = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end)
    throw data_error("malformed numeric value '" + std::string(s) + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Prediction-set serialization.
//   interval unions:  "lo1:hi1;lo2:hi2" with open endpoints suffixed "o"
//   label sets:       "l1|l2"
//   empty sets:       ""
// ---------------------------------------------------------------------------

inline std::string serialize_prediction_set(const PredictionSet& set) {
  std::string out;
  if (set.variant == PredictionSet::Variant::Labels) {
    for (std::size_t i = 0; i < set.labels.size(); ++i) {
      if (i) out += '|';
      out += std::to_string(set.labels[i]);
    }
    return out;
  }
  for (std::size_t i = 0; i < set.intervals.parts().size(); ++i) {
    const Interval& iv = set.intervals.parts()[i];
    if (i) out += ';';
    out += format_double(iv.lo);
    if (iv.lo_open && !std::isinf(iv.lo)) out += 'o';
    out += ':';
    out += format_double(iv.hi);
    if (iv.hi_open && !std::isinf(iv.hi)) out += 'o';
  }
  return out;
}

inline PredictionSet parse_prediction_set(std::string_view text,
                                          PredictionSet::Variant variant) {
  if (variant == PredictionSet::Variant::Labels) {
    std::vector<int> labels;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t next = text.find('|', pos);
      if (next == std::string_view::npos) next = text.size();
      labels.push_back(static_cast<int>(parse_double(text.substr(pos, next - pos))));
      pos = next + 1;
    }
    return PredictionSet::from_labels(std::move(labels));
  }
  std::vector<Interval> parts;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find(';', pos);
    if (next == std::string_view::npos) next = text.size();
    std::string_view seg = text.substr(pos, next - pos);
    const std::size_t colon = seg.find(':');
    if (colon == std::string_view::npos)
      throw data_error("malformed interval segment '" + std::string(seg) + "'");
    std::string_view lo = seg.substr(0, colon);
    std::string_view hi = seg.substr(colon + 1);
    Interval iv;
    if (!lo.empty() && lo.back() == 'o') {
      iv.lo_open = true;
      lo.remove_suffix(1);
    }
    if (!hi.empty() && hi.back() == 'o') {
      iv.hi_open = true;
      hi.remove_suffix(1);
    }
    iv.lo = parse_double(lo);
    iv.hi = parse_double(hi);
    if (std::isinf(iv.lo)) iv.lo_open = true;
    if (std::isinf(iv.hi)) iv.hi_open = true;
    parts.push_back(iv);
    pos = next + 1;
  }
  return PredictionSet::from_intervals(IntervalSet::normalize(std::move(parts)));
}

// ---------------------------------------------------------------------------
// CSV ingestion. Recognized columns: id, y, c, muhat, sigma_hat, q_lo, q_hi,
// sel_score, cost, prob_0..prob_k. Missing cells leave the field absent; an
// unrecognized header or malformed cell is an error naming the location.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace detail

inline std::vector<Unit> read_units_csv(const std::string& path, bool calibration) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw data_error("'" + path + "': missing header row");
  const auto header = detail::split_csv_line(line);
  std::vector<int> prob_index(header.size(), -1);
  int n_probs = 0;
  enum Col { Id, Y, C, Muhat, Sigma, Qlo, Qhi, SelScore, Cost, Prob };
  std::vector<Col> cols(header.size());
  for (std::size_t k = 0; k < header.size(); ++k) {
    const std::string& h = header[k];
    if (h == "id") cols[k] = Id;
    else if (h == "y") cols[k] = Y;
    else if (h == "c") cols[k] = C;
    else if (h == "muhat") cols[k] = Muhat;
    else if (h == "sigma_hat") cols[k] = Sigma;
    else if (h == "q_lo") cols[k] = Qlo;
    else if (h == "q_hi") cols[k] = Qhi;
    else if (h == "sel_score") cols[k] = SelScore;
    else if (h == "cost") cols[k] = Cost;
    else if (h.rfind("prob_", 0) == 0) {
      cols[k] = Prob;
      try {
        prob_index[k] = std::stoi(h.substr(5));
      } catch (const std::exception&) {
        throw data_error("'" + path + "': unrecognized column '" + h + "'");
      }
      n_probs = std::max(n_probs, prob_index[k] + 1);
    } else {
      throw data_error("'" + path + "': unrecognized column '" + h + "'");
    }
  }

  std::vector<Unit> units;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw data_error("'" + path + "' row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    Unit u;
    if (n_probs > 0) u.class_probs.assign(n_probs, 0.0);
    bool any_prob = false;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const std::string& cell = cells[k];
      if (cols[k] == Id) {
        u.id = cell;
        continue;
      }
      if (cell.empty()) continue;
      double v;
      try {
        v = parse_double(cell);
      } catch (const data_error&) {
        throw data_error("'" + path + "' row " + std::to_string(row) + ", column '" +
                         header[k] + "': malformed numeric cell '" + cell + "'");
      }
      switch (cols[k]) {
        case Y: u.outcome = v; break;
        case C: u.threshold_c = v; break;
        case Muhat: u.point_pred = v; break;
        case Sigma: u.sigma_hat = v; break;
        case Qlo: u.quantile_lo = v; break;
        case Qhi: u.quantile_hi = v; break;
        case SelScore: u.sel_score = v; break;
        case Cost: u.cost = v; break;
        case Prob:
          u.class_probs[prob_index[k]] = v;
          any_prob = true;
          break;
        default: break;
      }
    }
    if (!any_prob) u.class_probs.clear();
    if (u.id.empty()) u.id = (calibration ? "c" : "t") + std::to_string(row - 2);
    if (calibration && !u.outcome)
      throw data_error("'" + path + "' row " + std::to_string(row) +
                       ": calibration row missing y");
    try {
      validate_class_probs(u);
    } catch (const data_error& e) {
      throw data_error("'" + path + "' row " + std::to_string(row) + ": " + e.what());
    }
    units.push_back(std::move(u));
  }
  return units;
}

inline Dataset ingest(const std::string& calib_path, const std::string& test_path) {
  Dataset d;
  d.calib = read_units_csv(calib_path, true);
  d.test = read_units_csv(test_path, false);
  return d;
}

// ---------------------------------------------------------------------------
// Result documents: a small insertion-ordered JSON value with deterministic
// 17-significant-digit float emission. Parsing (for config echo and tests)
// goes through any standard JSON reader.
// ---------------------------------------------------------------------------

class JsonValue {
 public:
  enum class Type { Null, Bool, Int, Double, String, Array, Object };

  JsonValue() : type_(Type::Null) {}
  static JsonValue boolean(bool b) { JsonValue v; v.type_ = Type::Bool; v.bool_ = b; return v; }
  static JsonValue integer(long long i) { JsonValue v; v.type_ = Type::Int; v.int_ = i; return v; }
  static JsonValue number(double d) { JsonValue v; v.type_ = Type::Double; v.double_ = d; return v; }
  static JsonValue str(std::string s) { JsonValue v; v.type_ = Type::String; v.str_ = std::move(s); return v; }
  static JsonValue array() { JsonValue v; v.type_ = Type::Array; return v; }
  static JsonValue object() { JsonValue v; v.type_ = Type::Object; return v; }

  JsonValue& push(JsonValue v) {
    items_.push_back(std::move(v));
    return *this;
  }
  JsonValue& set(const std::string& key, JsonValue v) {
    keys_.push_back(key);
    items_.push_back(std::move(v));
    return *this;
  }

  void write(std::string& out) const {
    switch (type_) {
      case Type::Null: out += "null"; break;
      case Type::Bool: out += bool_ ? "true" : "false"; break;
      case Type::Int: out += std::to_string(int_); break;
      case Type::Double: {
        // JSON has no inf/nan literals; emit as strings.
        if (std::isfinite(double_)) out += format_double(double_);
        else { out += '"'; out += format_double(double_); out += '"'; }
        break;
      }
      case Type::String: {
        out += '"';
        for (char c : str_) {
          if (c == '"' || c == '\\') { out += '\\'; out += c; }
          else if (c == '\n') out += "\\n";
          else out += c;
        }
        out += '"';
        break;
      }
      case Type::Array: {
        out += '[';
        for (std::size_t i = 0; i < items_.size(); ++i) {
          if (i) out += ',';
          items_[i].write(out);
        }
        out += ']';
        break;
      }
      case Type::Object: {
        out += '{';
        for (std::size_t i = 0; i < items_.size(); ++i) {
          if (i) out += ',';
          out += '"';
          out += keys_[i];
          out += "\":";
          items_[i].write(out);
        }
        out += '}';
        break;
      }
    }
  }

  std::string dump() const {
    std::string out;
    write(out);
    out += '\n';
    return out;
  }

 private:
  Type type_;
  bool bool_ = false;
  long long int_ = 0;
  double double_ = 0.0;
  std::string str_;
  std::vector<std::string> keys_;
  std::vector<JsonValue> items_;
};

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write '" + path + "'");
  out << content;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace jomi
