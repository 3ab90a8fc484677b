#pragma once

// Line-delimited record envelope shared by every artifact file.
//
// Line 1 is a header object:
//   {"format":"codelabel","kind":<kind>,"meta":{...},"version":1}
// and every following non-empty line is one JSON record. Doubles are written
// with shortest round-trip precision, so reading a file back reproduces the
// exact bit patterns that were written.

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace codelabel::records {

using json = nlohmann::json;

inline constexpr const char* kFormatName = "codelabel";
inline constexpr int kFormatVersion = 1;

struct Record {
    std::size_t line = 0;  // 1-based line number in the source file
    json value;
};

struct Document {
    std::string kind;
    int version = kFormatVersion;
    json meta = json::object();
    std::vector<Record> records;
};

// Parses a document from text. Throws Error(Data) with the line number on
// malformed JSON, a missing/foreign header, an unsupported version, or a kind
// other than `expected_kind` (unless it is empty).
Document parse(const std::string& text, const std::string& expected_kind = {});
Document read_file(const std::filesystem::path& path, const std::string& expected_kind = {});

std::string serialize(const Document& doc);
void write_file(const std::filesystem::path& path, const Document& doc);

// Helpers for the typed readers.
const json& require(const Record& rec, const char* key);
std::string where(const std::filesystem::path& path, std::size_t line);

}  // namespace codelabel::records
