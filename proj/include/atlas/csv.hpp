#pragma once

#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace atlas::csv {

/// Reads one RFC 4180 record (quoted fields may span lines). Returns nothing
/// at end of input.
std::optional<std::vector<std::string>> read_record(std::istream& in);

/// Quotes a field when it contains a delimiter, quote or line break.
std::string escape(const std::string& field);

}  // namespace atlas::csv
