#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metagrl {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// One line of `key=value` tokens inside a [section].
struct TextRecord {
    int line = 0;
    std::map<std::string, std::string> fields;
};

// Sectioned key=value document shared by grid specs and scenario families:
//
//   # comment
//   [section]
//   key=value key2="quoted value" list=1,2,3
//
// Every non-blank line below a section header is one record.
struct TextDocument {
    std::map<std::string, std::vector<TextRecord>> sections;
    std::vector<std::string> section_order;

    bool has(const std::string& section) const { return sections.count(section) > 0; }
    const std::vector<TextRecord>& records(const std::string& section) const;
};

TextDocument parse_text_document(std::string_view text);
TextDocument read_text_document(const std::string& path);

// Typed accessor over a record that remembers which keys were read, so a
// loader can reject anything it did not consume.
class RecordReader {
public:
    RecordReader(const TextRecord& record, std::string section);

    bool has(const std::string& key) const;
    std::string text(const std::string& key);
    std::string text_or(const std::string& key, const std::string& fallback);
    double number(const std::string& key);
    double number_or(const std::string& key, double fallback);
    int integer(const std::string& key);
    int integer_or(const std::string& key, int fallback);
    bool boolean_or(const std::string& key, bool fallback);
    std::vector<double> numbers(const std::string& key);

    // Throws ParseError naming the first key that was never read.
    void finish() const;

private:
    [[noreturn]] void fail(const std::string& message) const;

    const TextRecord& record_;
    std::string section_;
    std::set<std::string> consumed_;
};

}  // namespace metagrl
