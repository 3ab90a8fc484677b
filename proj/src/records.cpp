#include "codelabel/records.hpp"

#include <fstream>
#include <sstream>

#include "codelabel/error.hpp"

namespace codelabel::records {

namespace {

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

Document parse(const std::string& text, const std::string& expected_kind) {
    Document doc;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json value;
        try {
            value = json::parse(line);
        } catch (const json::parse_error& e) {
            fail_data(line_prefix(line_no) + "parse error: " + e.what());
        }
        if (!value.is_object()) fail_data(line_prefix(line_no) + "record is not a JSON object");
        if (!have_header) {
            if (value.value("format", std::string{}) != kFormatName)
                fail_data(line_prefix(line_no) + "missing \"format\":\"codelabel\" header");
            doc.version = value.value("version", 0);
            if (doc.version != kFormatVersion)
                fail_data(line_prefix(line_no) + "unsupported format version " + std::to_string(doc.version));
            doc.kind = value.value("kind", std::string{});
            if (!expected_kind.empty() && doc.kind != expected_kind)
                fail_data(line_prefix(line_no) + "expected a '" + expected_kind + "' file, found '" + doc.kind + "'");
            if (value.contains("meta")) doc.meta = value["meta"];
            have_header = true;
            continue;
        }
        doc.records.push_back({line_no, std::move(value)});
    }
    if (!have_header) fail_data("empty file: no header record");
    return doc;
}

Document read_file(const std::filesystem::path& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_data("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse(buf.str(), expected_kind);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::string serialize(const Document& doc) {
    json header = {{"format", kFormatName}, {"version", doc.version}, {"kind", doc.kind}, {"meta", doc.meta}};
    std::string out = header.dump();
    out += '\n';
    for (const auto& rec : doc.records) {
        out += rec.value.dump();
        out += '\n';
    }
    return out;
}

void write_file(const std::filesystem::path& path, const Document& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_usage("cannot write " + path.string());
    out << serialize(doc);
    if (!out) fail_usage("write failed: " + path.string());
}

const json& require(const Record& rec, const char* key) {
    auto it = rec.value.find(key);
    if (it == rec.value.end()) fail_data(line_prefix(rec.line) + "missing field \"" + key + "\"");
    return *it;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

}  // namespace codelabel::records
