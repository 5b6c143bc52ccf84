#pragma once

// The `sok` command line: gen | train | eval | superres | rollout | diagnose |
// extend | report. Exit codes: 0 success, 1 numerical or validation failure,
// 2 usage, IO or format error.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sok::cli {

inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Flat key=value file with optional [sections]; '#' and ';' start comments.
struct IniEntry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};
std::vector<IniEntry> parse_ini(std::istream& is);
std::vector<IniEntry> read_ini(const std::filesystem::path& path);

/// Numeric CSV: first non-comment line is the header; empty cells are NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> comments;
};
CsvTable read_csv(const std::filesystem::path& path);

struct SvgOptions {
  std::string title;
  bool log_y = false;
  std::size_t x_column = 0;
  int width = 800;
  int height = 480;
};
/// One polyline per column other than x_column.
std::string render_svg(const CsvTable& table, const SvgOptions& opt);

}  // namespace sok::cli
