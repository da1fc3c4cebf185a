#include "metagrl/text_document.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace metagrl {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void parse_fail(int line, const std::string& message) {
    throw ParseError("line " + std::to_string(line) + ": " + message);
}

TextRecord parse_record(std::string_view body, int line) {
    TextRecord record;
    record.line = line;
    std::size_t i = 0;
    while (i < body.size()) {
        while (i < body.size() && (body[i] == ' ' || body[i] == '\t')) ++i;
        if (i >= body.size()) break;
        const auto eq = body.find('=', i);
        if (eq == std::string_view::npos) parse_fail(line, "expected key=value");
        std::string key(trim(body.substr(i, eq - i)));
        if (key.empty() || key.find_first_of(" \t") != std::string::npos) {
            parse_fail(line, "malformed key near '" + std::string(body.substr(i, eq - i)) + "'");
        }
        i = eq + 1;
        std::string value;
        if (i < body.size() && body[i] == '"') {
            const auto close = body.find('"', i + 1);
            if (close == std::string_view::npos) parse_fail(line, "unterminated quote");
            value = std::string(body.substr(i + 1, close - i - 1));
            i = close + 1;
        } else {
            const auto end = body.find_first_of(" \t", i);
            const auto stop = end == std::string_view::npos ? body.size() : end;
            value = std::string(body.substr(i, stop - i));
            i = stop;
        }
        if (!record.fields.emplace(key, value).second) parse_fail(line, "duplicate key '" + key + "'");
    }
    return record;
}

}  // namespace

const std::vector<TextRecord>& TextDocument::records(const std::string& section) const {
    static const std::vector<TextRecord> empty;
    auto it = sections.find(section);
    return it == sections.end() ? empty : it->second;
}

TextDocument parse_text_document(std::string_view text) {
    TextDocument doc;
    std::string current;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto end = nl == std::string_view::npos ? text.size() : nl;
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;

        // '#' starts a comment unless it sits inside quotes.
        bool quoted = false;
        for (std::size_t k = 0; k < line.size(); ++k) {
            if (line[k] == '"') quoted = !quoted;
            if (line[k] == '#' && !quoted) {
                line = line.substr(0, k);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) {
            if (nl == std::string_view::npos) break;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') parse_fail(line_no, "unterminated section header");
            current = std::string(trim(line.substr(1, line.size() - 2)));
            if (current.empty()) parse_fail(line_no, "empty section name");
            if (doc.sections.count(current)) parse_fail(line_no, "duplicate section [" + current + "]");
            doc.sections[current];
            doc.section_order.push_back(current);
        } else {
            if (current.empty()) parse_fail(line_no, "record outside of any section");
            doc.sections[current].push_back(parse_record(line, line_no));
        }
        if (nl == std::string_view::npos) break;
    }
    return doc;
}

TextDocument read_text_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_text_document(buffer.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

RecordReader::RecordReader(const TextRecord& record, std::string section)
    : record_(record), section_(std::move(section)) {}

void RecordReader::fail(const std::string& message) const {
    throw ParseError("line " + std::to_string(record_.line) + " [" + section_ + "]: " + message);
}

bool RecordReader::has(const std::string& key) const { return record_.fields.count(key) > 0; }

std::string RecordReader::text(const std::string& key) {
    auto it = record_.fields.find(key);
    if (it == record_.fields.end()) fail("missing key '" + key + "'");
    consumed_.insert(key);
    return it->second;
}

std::string RecordReader::text_or(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : fallback;
}

double RecordReader::number(const std::string& key) {
    const std::string raw = text(key);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(raw.c_str(), &end);
    if (raw.empty() || end != raw.c_str() + raw.size() || errno == ERANGE) {
        fail("key '" + key + "' is not a number: '" + raw + "'");
    }
    return v;
}

double RecordReader::number_or(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
}

int RecordReader::integer(const std::string& key) {
    const std::string raw = text(key);
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(raw.c_str(), &end, 10);
    if (raw.empty() || end != raw.c_str() + raw.size() || errno == ERANGE) {
        fail("key '" + key + "' is not an integer: '" + raw + "'");
    }
    return static_cast<int>(v);
}

int RecordReader::integer_or(const std::string& key, int fallback) {
    return has(key) ? integer(key) : fallback;
}

bool RecordReader::boolean_or(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string raw = text(key);
    if (raw == "true" || raw == "1" || raw == "yes") return true;
    if (raw == "false" || raw == "0" || raw == "no") return false;
    fail("key '" + key + "' is not a boolean: '" + raw + "'");
}

std::vector<double> RecordReader::numbers(const std::string& key) {
    const std::string raw = text(key);
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        const auto comma = raw.find(',', pos);
        const std::string item = raw.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || end != item.c_str() + item.size()) {
            fail("key '" + key + "' has a non-numeric list entry '" + item + "'");
        }
        out.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

void RecordReader::finish() const {
    for (const auto& [key, value] : record_.fields) {
        if (!consumed_.count(key)) fail("unknown key '" + key + "'");
    }
}

}  // namespace metagrl
