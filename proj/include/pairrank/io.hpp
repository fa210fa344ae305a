#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairrank/core.hpp"
#include "pairrank/diagnostics.hpp"

namespace pairrank {

// ---- timestamps ----------------------------------------------------------

// Formats epoch seconds as UTC "YYYY-MM-DDTHH:MM:SSZ".
inline std::string iso8601_format(std::int64_t epoch_seconds) {
    const time_t t = static_cast<time_t>(epoch_seconds);
    std::tm tm{};
    if (gmtime_r(&t, &tm) == nullptr) throw Error("timestamp out of range");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

inline std::int64_t iso8601_parse(const std::string& s) {
    std::tm tm{};
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char z = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &sec, &z) != 7 ||
        z != 'Z')
        throw Error("bad timestamp '" + s + "', expected YYYY-MM-DDTHH:MM:SSZ");
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
        sec < 0 || sec > 60)
        throw Error("bad timestamp '" + s + "'");
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = sec;
    const time_t t = timegm(&tm);
    if (t == static_cast<time_t>(-1) && !(y == 1969 && mo == 12 && d == 31))
        throw Error("timestamp out of range '" + s + "'");
    return static_cast<std::int64_t>(t);
}

// ---- comparison log (JSON Lines) -----------------------------------------

inline nlohmann::json record_to_json(const ComparisonRecord& r) {
    nlohmann::json j{{"first", r.first},
                     {"second", r.second},
                     {"outcome", to_string(r.outcome)},
                     {"attempts", r.attempts},
                     {"judge_id", r.judge_id},
                     {"timestamp", iso8601_format(r.timestamp)}};
    if (r.raw_response) j["raw_response"] = *r.raw_response;
    return j;
}

inline ComparisonRecord record_from_json(const nlohmann::json& j) {
    ComparisonRecord r;
    try {
        r.first = j.at("first").get<int>();
        r.second = j.at("second").get<int>();
        r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
        r.attempts = j.value("attempts", 1);
        r.judge_id = j.value("judge_id", std::string{});
        if (j.contains("timestamp"))
            r.timestamp = iso8601_parse(j.at("timestamp").get<std::string>());
        if (j.contains("raw_response") && !j.at("raw_response").is_null())
            r.raw_response = j.at("raw_response").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidRecordError(std::string("bad comparison record: ") + e.what());
    }
    if (r.first == r.second) throw InvalidRecordError("record compares an item with itself");
    if (r.first < 0 || r.second < 0) throw InvalidRecordError("negative item id");
    if (r.attempts < 1) throw InvalidRecordError("attempts must be >= 1");
    return r;
}

inline std::vector<ComparisonRecord> read_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open log file '" + path + "'");
    std::vector<ComparisonRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw InvalidRecordError(path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const InvalidRecordError& e) {
            throw InvalidRecordError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

inline void append_log(const std::string& path, const std::vector<ComparisonRecord>& records) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw Error("cannot open log file '" + path + "' for append");
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
    if (!out) throw Error("write to '" + path + "' failed");
}

// ---- CSV helpers ----------------------------------------------------------

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// Splits one CSV line honoring double-quoted fields.
inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\r' && i + 1 == line.size()) {
            // tolerate CRLF
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                                      const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error("'" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw Error("'" + path + "': expected header '" + expected_header + "', got '" + line +
                    "'");
    std::vector<std::vector<std::string>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = csv_split(line);
        const auto want = csv_split(expected_header).size();
        if (fields.size() != want)
            throw Error(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(want) + " fields, got " + std::to_string(fields.size()));
        rows.push_back(std::move(fields));
    }
    return rows;
}

inline int parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw Error("");
        return v;
    } catch (...) {
        throw Error("bad " + what + " '" + s + "'");
    }
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw Error("");
        return v;
    } catch (...) {
        throw Error("bad " + what + " '" + s + "'");
    }
}

}  // namespace detail

// ---- ground truth ---------------------------------------------------------

struct GroundTruthTable {
    Items items;
    std::vector<double> scores;
};

// Reads "item_id,label,score". Rows may arrive in any order; ids must be
// exactly 0..n-1.
inline GroundTruthTable read_ground_truth_csv(const std::string& path) {
    const auto rows = detail::read_csv(path, "item_id,label,score");
    const int n = static_cast<int>(rows.size());
    if (n == 0) throw Error("'" + path + "' has no data rows");
    GroundTruthTable gt;
    gt.items.labels.assign(n, {});
    gt.scores.assign(n, 0.0);
    std::vector<bool> seen(n, false);
    for (const auto& row : rows) {
        const int id = detail::parse_int(row[0], "item_id");
        if (id < 0 || id >= n) throw Error("item_id " + std::to_string(id) + " out of range");
        if (seen[id]) throw Error("duplicate item_id " + std::to_string(id));
        seen[id] = true;
        gt.items.labels[id] = row[1];
        gt.scores[id] = detail::parse_double(row[2], "score");
    }
    gt.items.validate();
    return gt;
}

inline void write_ground_truth_csv(const std::string& path, const GroundTruthTable& gt) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << "item_id,label,score\n";
    for (std::size_t i = 0; i < gt.scores.size(); ++i)
        out << i << ',' << csv_escape(gt.items.labels[i]) << ',' << gt.scores[i] << '\n';
    if (!out) throw Error("write to '" + path + "' failed");
}

// ---- scores ---------------------------------------------------------------

// Writes "item_id,label,log_strength,rank,algorithm,alpha", one row per
// item in id order. rank 0 is the top-ranked (wealthiest) item.
inline void write_scores_csv(const std::string& path, const Items& items,
                             const RankingResult& result) {
    const int n = static_cast<int>(result.scores.size());
    if (static_cast<int>(items.labels.size()) != n)
        throw Error("items and scores disagree on n");
    const auto rank_of = inverse_permutation(result.order);
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << "item_id,label,log_strength,rank,algorithm,alpha\n";
    out.precision(17);
    for (int i = 0; i < n; ++i) {
        out << i << ',' << csv_escape(items.labels[i]) << ',' << result.scores[i] << ','
            << rank_of[i] << ',' << to_string(result.algorithm) << ',' << result.alpha << '\n';
    }
    if (!out) throw Error("write to '" + path + "' failed");
}

struct ScoresTable {
    Items items;
    RankingResult result;
};

inline ScoresTable read_scores_csv(const std::string& path) {
    const auto rows = detail::read_csv(path, "item_id,label,log_strength,rank,algorithm,alpha");
    const int n = static_cast<int>(rows.size());
    if (n == 0) throw Error("'" + path + "' has no data rows");
    ScoresTable t;
    t.items.labels.assign(n, {});
    t.result.scores.assign(n, 0.0);
    t.result.order.assign(n, -1);
    std::vector<bool> seen(n, false);
    for (const auto& row : rows) {
        const int id = detail::parse_int(row[0], "item_id");
        if (id < 0 || id >= n) throw Error("item_id " + std::to_string(id) + " out of range");
        if (seen[id]) throw Error("duplicate item_id " + std::to_string(id));
        seen[id] = true;
        t.items.labels[id] = row[1];
        t.result.scores[id] = detail::parse_double(row[2], "log_strength");
        const int rank = detail::parse_int(row[3], "rank");
        if (rank < 0 || rank >= n) throw Error("rank " + std::to_string(rank) + " out of range");
        if (t.result.order[rank] != -1) throw Error("duplicate rank " + std::to_string(rank));
        t.result.order[rank] = id;
        t.result.algorithm = algorithm_from_string(row[4]);
        t.result.alpha = detail::parse_double(row[5], "alpha");
    }
    t.items.validate();
    return t;
}

// ---- image manifest -------------------------------------------------------

struct ImageManifest {
    Items items;
    std::vector<std::string> uris;
};

// Reads "item_id,label,uri" with ids 0..n-1.
inline ImageManifest read_image_manifest(const std::string& path) {
    const auto rows = detail::read_csv(path, "item_id,label,uri");
    const int n = static_cast<int>(rows.size());
    if (n == 0) throw Error("'" + path + "' has no data rows");
    ImageManifest m;
    m.items.labels.assign(n, {});
    m.uris.assign(n, {});
    std::vector<bool> seen(n, false);
    for (const auto& row : rows) {
        const int id = detail::parse_int(row[0], "item_id");
        if (id < 0 || id >= n) throw Error("item_id " + std::to_string(id) + " out of range");
        if (seen[id]) throw Error("duplicate item_id " + std::to_string(id));
        seen[id] = true;
        m.items.labels[id] = row[1];
        m.uris[id] = row[2];
    }
    m.items.validate();
    return m;
}

// ---- histogram ------------------------------------------------------------

inline void write_histogram_csv(const std::string& path, const Histogram& h) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << "bin_lower,count\n";
    for (const auto& [lower, count] : h.bins) out << lower << ',' << count << '\n';
    if (!out) throw Error("write to '" + path + "' failed");
}

// ---- key=value config -----------------------------------------------------

// Parses "key = value" lines; '#' starts a comment, blank lines are
// skipped. Later keys overwrite earlier ones.
inline std::map<std::string, std::string> parse_kv_config(const std::string& text) {
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        if (a == std::string::npos) return std::string{};
        const auto b = s.find_last_not_of(" \t");
        return s.substr(a, b - a + 1);
    };
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw Error("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

inline std::map<std::string, std::string> read_kv_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_kv_config(ss.str());
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw Error("write to '" + path + "' failed");
}

}  // namespace pairrank
