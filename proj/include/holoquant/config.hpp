#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "holoquant/errors.hpp"

namespace holoquant {

// Minimal sectioned key-value format:
//   [section]
//   key = value        # trailing comments allowed
// Blank lines and lines starting with '#' or ';' are ignored. Section and key
// order is preserved so config echoes are stable.
class Config {
public:
    struct Entry {
        std::string key;
        std::string value;
        int line = 0;
    };
    struct Section {
        std::string name;
        std::vector<Entry> entries;
    };

    static Config parse(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string raw;
        int line_no = 0;
        std::size_t current = npos;
        while (std::getline(in, raw)) {
            ++line_no;
            std::string line = strip_comment(raw);
            trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3) {
                    throw ConfigError("line " + std::to_string(line_no) +
                                          ": malformed section header",
                                      line_no);
                }
                std::string name = line.substr(1, line.size() - 2);
                trim(name);
                current = cfg.section_index(name, true);
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(
                    "line " + std::to_string(line_no) + ": expected 'key = value'",
                    line_no);
            }
            std::string key = line.substr(0, eq);
            std::string value = line.substr(eq + 1);
            trim(key);
            trim(value);
            if (key.empty()) {
                throw ConfigError("line " + std::to_string(line_no) + ": empty key",
                                  line_no);
            }
            if (current == npos) {
                throw ConfigError("line " + std::to_string(line_no) +
                                      ": key '" + key + "' appears before any section",
                                  line_no);
            }
            for (const Entry& e : cfg.sections_[current].entries) {
                if (e.key == key) {
                    throw ConfigError("line " + std::to_string(line_no) +
                                          ": duplicate key '" + key + "'",
                                      line_no);
                }
            }
            cfg.sections_[current].entries.push_back({key, value, line_no});
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    bool has(const std::string& section, const std::string& key) const {
        return find(section, key) != nullptr;
    }

    const std::string& get(const std::string& section, const std::string& key) const {
        const Entry* e = find(section, key);
        if (e == nullptr) {
            throw ConfigError("missing required key '" + key + "' in section [" +
                              section + "]");
        }
        return e->value;
    }

    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const {
        const Entry* e = find(section, key);
        return e == nullptr ? fallback : e->value;
    }

    double number(const std::string& section, const std::string& key) const {
        const Entry* e = require(section, key);
        return to_number(*e);
    }
    double number_or(const std::string& section, const std::string& key,
                     double fallback) const {
        const Entry* e = find(section, key);
        return e == nullptr ? fallback : to_number(*e);
    }

    std::int64_t integer(const std::string& section, const std::string& key) const {
        const Entry* e = require(section, key);
        return to_integer(*e);
    }
    std::int64_t integer_or(const std::string& section, const std::string& key,
                            std::int64_t fallback) const {
        const Entry* e = find(section, key);
        return e == nullptr ? fallback : to_integer(*e);
    }

    std::vector<std::int64_t> integer_list(const std::string& section,
                                           const std::string& key) const {
        const Entry* e = require(section, key);
        std::vector<std::int64_t> out;
        for (const std::string& item : split_list(*e)) {
            out.push_back(to_integer(Entry{e->key, item, e->line}));
        }
        return out;
    }

    std::vector<double> number_list(const std::string& section,
                                    const std::string& key) const {
        const Entry* e = require(section, key);
        std::vector<double> out;
        for (const std::string& item : split_list(*e)) {
            out.push_back(to_number(Entry{e->key, item, e->line}));
        }
        return out;
    }

    const std::vector<Section>& sections() const { return sections_; }

    // canonical dump for run manifests
    std::string echo() const {
        std::string out;
        for (const Section& s : sections_) {
            out += "[" + s.name + "]\n";
            for (const Entry& e : s.entries) {
                out += e.key + " = " + e.value + "\n";
            }
        }
        return out;
    }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<Section> sections_;

    static std::string strip_comment(const std::string& line) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '#' || line[i] == ';') return line.substr(0, i);
        }
        return line;
    }

    static void trim(std::string& s) {
        std::size_t a = 0;
        while (a < s.size() && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        std::size_t b = s.size();
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        s = s.substr(a, b - a);
    }

    std::size_t section_index(const std::string& name, bool create) {
        for (std::size_t i = 0; i < sections_.size(); ++i) {
            if (sections_[i].name == name) return i;
        }
        if (!create) return npos;
        sections_.push_back({name, {}});
        return sections_.size() - 1;
    }

    const Entry* find(const std::string& section, const std::string& key) const {
        for (const Section& s : sections_) {
            if (s.name != section) continue;
            for (const Entry& e : s.entries) {
                if (e.key == key) return &e;
            }
        }
        return nullptr;
    }

    const Entry* require(const std::string& section, const std::string& key) const {
        const Entry* e = find(section, key);
        if (e == nullptr) {
            throw ConfigError("missing required key '" + key + "' in section [" +
                              section + "]");
        }
        return e;
    }

    static double to_number(const Entry& e) {
        try {
            std::size_t used = 0;
            const double v = std::stod(e.value, &used);
            if (used != e.value.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("line " + std::to_string(e.line) + ": value of '" +
                                  e.key + "' is not a number",
                              e.line);
        }
    }

    static std::int64_t to_integer(const Entry& e) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(e.value, &used);
            if (used != e.value.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("line " + std::to_string(e.line) + ": value of '" +
                                  e.key + "' is not an integer",
                              e.line);
        }
    }

    static std::vector<std::string> split_list(const Entry& e) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream in(e.value);
        while (std::getline(in, item, ',')) {
            trim(item);
            if (item.empty()) {
                throw ConfigError("line " + std::to_string(e.line) + ": empty item in '" +
                                      e.key + "' list",
                                  e.line);
            }
            out.push_back(item);
        }
        if (out.empty()) {
            throw ConfigError("line " + std::to_string(e.line) + ": '" + e.key +
                                  "' list is empty",
                              e.line);
        }
        return out;
    }
};

}  // namespace holoquant
