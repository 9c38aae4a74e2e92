#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "flowsynth/common.hpp"

namespace flowsynth {

// Small write-only JSON value. Object keys keep insertion order so emitted
// documents are stable across runs, which matters for byte-level checks on
// tool output.
class Json {
public:
    Json() : value_(nullptr) {}
    Json(bool v) : value_(v) {}
    Json(double v) : value_(v) {}
    Json(std::int64_t v) : value_(v) {}
    Json(std::uint64_t v) : value_(static_cast<std::int64_t>(v)) {
        if (v > static_cast<std::uint64_t>(INT64_MAX)) throw ValueError("Json: integer too large");
    }
    Json(int v) : value_(static_cast<std::int64_t>(v)) {}
    Json(const char* v) : value_(std::string(v)) {}
    Json(std::string v) : value_(std::move(v)) {}

    static Json array() {
        Json j;
        j.value_ = Array{};
        return j;
    }
    static Json object() {
        Json j;
        j.value_ = Object{};
        return j;
    }

    void push_back(Json v) { std::get<Array>(value_).push_back(std::move(v)); }

    // Sets (or replaces) a key in an object.
    void set(const std::string& key, Json v) {
        auto& obj = std::get<Object>(value_);
        for (auto& kv : obj) {
            if (kv.first == key) {
                kv.second = std::move(v);
                return;
            }
        }
        obj.emplace_back(key, std::move(v));
    }

    std::string dump() const {
        std::string out;
        write(out);
        return out;
    }

    // Shortest round-trip decimal text for a double; the same routine backs
    // every numeric field so logs and sidecars format consistently.
    static std::string number_text(double v) {
        if (!std::isfinite(v)) throw ValueError("Json: non-finite number");
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    }

private:
    using Array = std::vector<Json>;
    using Object = std::vector<std::pair<std::string, Json>>;
    std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, Array, Object> value_;

    static void write_escaped(std::string& out, const std::string& s) {
        out.push_back('"');
        for (char c : s) {
            switch (c) {
                case '"': out += "\\\""; break;
                case '\\': out += "\\\\"; break;
                case '\n': out += "\\n"; break;
                case '\r': out += "\\r"; break;
                case '\t': out += "\\t"; break;
                default:
                    if (static_cast<unsigned char>(c) < 0x20) {
                        char buf[8];
                        std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                        out += buf;
                    } else {
                        out.push_back(c);
                    }
            }
        }
        out.push_back('"');
    }

    void write(std::string& out) const {
        if (std::holds_alternative<std::nullptr_t>(value_)) {
            out += "null";
        } else if (auto* b = std::get_if<bool>(&value_)) {
            out += *b ? "true" : "false";
        } else if (auto* i = std::get_if<std::int64_t>(&value_)) {
            out += std::to_string(*i);
        } else if (auto* d = std::get_if<double>(&value_)) {
            out += number_text(*d);
        } else if (auto* s = std::get_if<std::string>(&value_)) {
            write_escaped(out, *s);
        } else if (auto* a = std::get_if<Array>(&value_)) {
            out.push_back('[');
            for (std::size_t k = 0; k < a->size(); ++k) {
                if (k) out.push_back(',');
                (*a)[k].write(out);
            }
            out.push_back(']');
        } else {
            const auto& obj = std::get<Object>(value_);
            out.push_back('{');
            for (std::size_t k = 0; k < obj.size(); ++k) {
                if (k) out.push_back(',');
                write_escaped(out, obj[k].first);
                out.push_back(':');
                obj[k].second.write(out);
            }
            out.push_back('}');
        }
    }
};

// Appends one JSON document per line; used for training metrics streams.
class JsonLinesWriter {
public:
    explicit JsonLinesWriter(const std::string& path, bool append = false)
        : out_(path, append ? (std::ios::out | std::ios::app) : std::ios::out) {
        if (!out_) throw IoError("cannot open '" + path + "' for writing");
        path_ = path;
    }

    void write(const Json& record) {
        out_ << record.dump() << '\n';
        out_.flush();
        if (!out_) throw IoError("write failed on '" + path_ + "'");
    }

private:
    std::ofstream out_;
    std::string path_;
};

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write failed on '" + path + "'");
}

}  // namespace flowsynth
