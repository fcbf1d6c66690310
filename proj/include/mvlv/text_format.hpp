#pragma once

#include <string>
#include <vector>

namespace mvlv {

/// Fixed 12-significant-digit rendering used by every text output (DSS
/// files, CSV), so identical inputs give byte-identical files.
std::string fmt12(double v);

/// Write `content` to `path`, throwing IoError on failure.
void write_text_file(const std::string& path, const std::string& content);

/// One CSV row; fields are joined with ',' (values never contain commas here).
std::string csv_row(const std::vector<std::string>& fields);

}  // namespace mvlv
