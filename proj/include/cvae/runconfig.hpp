#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "cvae/checkpoint.hpp"  // FormatError

namespace cvae {

// UTF-8 key-value run configuration with [section] headers. Lines are
// `key=value`; `#` starts a comment; keys are addressed as "section.key"
// (empty section for the preamble).
class RunConfig {
   public:
    RunConfig() = default;

    static RunConfig parse(const std::string& text) {
        RunConfig c;
        std::istringstream is(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            while (!line.empty() && (line.back() == ' ' || line.back() == '\r' ||
                                     line.back() == '\t'))
                line.pop_back();
            std::size_t start = line.find_first_not_of(" \t");
            if (start == std::string::npos) continue;
            line.erase(0, start);
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw FormatError("config line " + std::to_string(lineno) +
                                      ": unterminated section");
                section = line.substr(1, line.size() - 2);
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw FormatError("config line " + std::to_string(lineno) +
                                  ": expected key=value");
            auto trim = [](std::string s) {
                std::size_t a = s.find_first_not_of(" \t");
                std::size_t b = s.find_last_not_of(" \t");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
            c.values_[section.empty() ? key : section + "." + key] = val;
        }
        return c;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw FormatError("config: cannot open " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }
    long get_int(const std::string& key, long dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : std::stol(it->second);
    }
    double get_real(const std::string& key, double dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : std::stod(it->second);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    std::string echo() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
        return out;
    }

   private:
    std::map<std::string, std::string> values_;
};

// FNV-1a over file bytes, for manifest input hashes.
inline std::string content_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return "missing";
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= (unsigned char)buf[i];
            h *= 0x100000001b3ull;
        }
        if (!f) break;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace cvae
